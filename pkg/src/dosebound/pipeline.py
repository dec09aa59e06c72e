"""End-to-end curve estimation: folds, nuisances, pseudo-outcomes, series
regression, cross-fit averaging.

Upper bounds run the lower-bound pipeline on the negated outcomes and mirror
the resulting curve, which makes the upper/lower duality an identity of the
plumbing rather than an approximation.
"""

from __future__ import annotations

import numpy as np

from .core_data import Dataset, RunConfig, make_fold_plan, negate_outcomes
from .pseudo_outcome import build_all
from .sieve_regression import cross_fit_average, fit_curve, make_basis, negate_curve


def default_grid(domain, points: int = 101) -> np.ndarray:
    # Trim 2% from each end; series fits are least reliable at the boundary.
    pad = 0.02 * domain.width
    return np.linspace(domain.lo + pad, domain.hi - pad, points)


def estimate_bound_curve(ds: Dataset, config: RunConfig, grid, bundle_factory=None):
    """Estimate one side of the dose-response bound on a grid.

    Returns (BoundCurve, diagnostics).  `bundle_factory(ds_I3, config,
    negated)` overrides the built-in nuisance fits, e.g. with oracle
    surfaces on simulated data.
    """
    if config.side == "upper":
        lower_cfg = _with(config, side="lower")
        curve, diags = _estimate_lower(
            negate_outcomes(ds), lower_cfg, grid, bundle_factory, negated=True
        )
        return negate_curve(curve), diags
    return _estimate_lower(ds, config, grid, bundle_factory, negated=False)


def _estimate_lower(ds, config, grid, bundle_factory, negated):
    plan = make_fold_plan(ds.n, config.K, config.seed, config.cross_fit)
    sets = build_all(ds, plan, config, bundle_factory=bundle_factory, negated=negated)
    basis = make_basis(config.basis, ds.domain)
    curves = [fit_curve(s.t, s.y_hat, basis, grid, config.alpha) for s in sets]
    diagnostics = [s.diagnostics for s in sets]
    return cross_fit_average(curves), diagnostics


def _with(config: RunConfig, **overrides) -> RunConfig:
    fields = dict(
        model=config.model,
        side=config.side,
        sensitivity=config.sensitivity,
        basis=config.basis,
        quadrature_nodes=config.quadrature_nodes,
        density_floor=config.density_floor,
        seed=config.seed,
        alpha=config.alpha,
        domain=config.domain,
        K=config.K,
        cross_fit=config.cross_fit,
        nested_fit=config.nested_fit,
        learner=config.learner,
    )
    fields.update(overrides)
    return RunConfig(**fields)
