"""Debiased pseudo-outcomes on the evaluation fold.

For each evaluation row the pseudo-outcome is an aggregation-fold average of
the fitted bound surface plus a density-ratio-weighted quadrature over
exposure values t' of the centered correction term: psi/nu against the
conditional density for the expectile bound, rho + q - zeta for the
quantile/CVaR bound.  Sensitivity values enter only through the pair level
tau = 1/(1 + value).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_data import Dataset, ExposureDomain, FoldPlan, RunConfig
from .errors import InputError, NumericError
from .nuisance import NuisanceBundle, assemble_bundle
from .sensitivity import SensitivityFunction, from_spec


@dataclass(frozen=True)
class QuadratureRule:
    """Integration nodes and positive weights on the exposure domain."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.size != self.weights.size or self.nodes.size == 0:
            raise InputError("quadrature nodes and weights must match and be nonempty")
        if np.any(self.weights <= 0):
            raise InputError("quadrature weights must be positive")

    def integrate(self, values) -> np.ndarray:
        """Weighted sum along the last axis."""
        return np.asarray(values) @ self.weights


def make_gauss_legendre(n_nodes: int, domain: ExposureDomain) -> QuadratureRule:
    """Standard Gauss-Legendre rule affinely mapped onto the domain."""
    if n_nodes < 8:
        raise InputError(f"need at least 8 quadrature nodes, got {n_nodes}")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    half = 0.5 * domain.width
    nodes = domain.lo + half * (x + 1.0)
    weights = w * half
    return QuadratureRule(nodes=nodes, weights=weights)


def make_composite_gauss_legendre(edges, nodes_per_panel: int) -> QuadratureRule:
    """Panel-wise Gauss-Legendre rule with panels between consecutive edges.

    Aligning panels with the discontinuities of a piecewise-smooth integrand
    (the bin edges of a binned density) makes the total rule insensitive to
    the per-panel node count.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InputError("panel edges must be strictly increasing")
    x, w = np.polynomial.legendre.leggauss(max(2, nodes_per_panel))
    nodes = []
    weights = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(w * half)
    return QuadratureRule(nodes=np.concatenate(nodes), weights=np.concatenate(weights))


def pipeline_rule(bundle: NuisanceBundle, config: RunConfig, domain: ExposureDomain) -> QuadratureRule:
    """Quadrature used by the pipeline for a given fitted bundle."""
    edges = getattr(bundle.density, "bin_edges", None)
    if edges is not None:
        per_panel = max(4, int(np.ceil(config.quadrature_nodes / (len(edges) - 1))))
        return make_composite_gauss_legendre(edges, per_panel)
    return make_gauss_legendre(config.quadrature_nodes, domain)


class MarginalDensityAverage:
    """Average of the conditional density over aggregation-fold covariates.

    Binned densities reduce to cached per-bin column means; other densities
    fall back to averaging the per-row evaluations, memoized per exposure.
    """

    def __init__(self, density, X_rows):
        self.density = density
        self.X_rows = np.atleast_2d(X_rows)
        self._cache: dict = {}
        if hasattr(density, "row_mass"):
            self._col_mean = density.row_mass(self.X_rows).mean(axis=0)
        else:
            self._col_mean = None

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self._col_mean is not None:
            return self._col_mean[self.density.bin_of(t)] / self.density.bin_width
        out = np.empty(t.size)
        missing = [tv for tv in t if tv not in self._cache]
        if missing:
            vals = self.density.grid(np.asarray(missing), self.X_rows).mean(axis=0)
            self._cache.update(zip(missing, vals))
        for i, tv in enumerate(t):
            out[i] = self._cache[tv]
        return out


def marginal_density_average(bundle: NuisanceBundle, rows_I2: Dataset, t: float) -> float:
    """I2 average of the fitted conditional density at exposure t."""
    if rows_I2.n == 0:
        raise InputError("aggregation fold is empty")
    avg = MarginalDensityAverage(bundle.density, rows_I2.X)
    return float(avg.at(float(t))[0])


@dataclass(frozen=True)
class PseudoOutcomeSample:
    t: float
    y_hat: float
    model: str


@dataclass
class PseudoOutcomeSet:
    """Vectorized pseudo-outcomes for one role triple."""

    t: np.ndarray
    y_hat: np.ndarray
    model: str
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        for ti, yi in zip(self.t, self.y_hat):
            yield PseudoOutcomeSample(float(ti), float(yi), self.model)

    def __len__(self):
        return self.t.size


_CHUNK_BYTES = 48_000_000


def _i2_chunk_size(m: int, ntau: int) -> int:
    return max(8, int(_CHUNK_BYTES / (max(m, 1) * max(ntau, 1) * 8)))


def _density_pieces(bundle, X1, T1, nodes, X2):
    dens_nodes = bundle.density.grid(nodes, X1)
    denom = bundle.density.at(T1, X1)
    floor = getattr(bundle.density, "floor", 0.0)
    if np.any(denom < floor - 1e-12) or np.any(denom <= 0):
        raise NumericError("conditional density fell below its floor")
    fbar = MarginalDensityAverage(bundle.density, X2).at(T1)
    return dens_nodes, denom, fbar


def build_rosenbaum_batch(
    X1, T1, Y1, bundle: NuisanceBundle, rows_I2: Dataset,
    sf: SensitivityFunction, quad: QuadratureRule,
) -> PseudoOutcomeSet:
    """Expectile-bound pseudo-outcomes for a block of evaluation rows."""
    X1 = np.atleast_2d(X1)
    T1 = np.asarray(T1, dtype=float).ravel()
    Y1 = np.asarray(Y1, dtype=float).ravel()
    surf = bundle.expectile_surface
    nodes = quad.nodes

    gam_nodes = np.maximum(sf.eval(T1[:, None], nodes[None, :]), 1.0)
    tau_nodes = 1.0 / (1.0 + gam_nodes)
    theta = surf.eval(X1, T1, tau_nodes)
    cdf_at_theta = bundle.tail_cdf.eval(X1, T1, theta)
    nu = 1.0 + (gam_nodes - 1.0) * np.clip(cdf_at_theta, 0.0, 1.0)
    diff = Y1[:, None] - theta
    psi = np.maximum(diff, 0.0) - gam_nodes * np.maximum(-diff, 0.0)

    dens_nodes, denom, fbar = _density_pieces(bundle, X1, T1, nodes, rows_I2.X)
    correction = (psi / nu * dens_nodes) @ quad.weights
    ratio = fbar / denom

    # Aggregation-fold average of the bound surface at each evaluation exposure.
    prep = surf.prepare_rows(rows_I2.X)
    n2 = rows_I2.n
    i2_term = np.empty(T1.size)
    step = _i2_chunk_size(n2, getattr(surf, "tau_grid", np.empty(1)).size)
    for s in range(0, T1.size, step):
        sl = slice(s, min(s + step, T1.size))
        gam2 = np.maximum(sf.eval(T1[sl, None], rows_I2.t[None, :]), 1.0)
        tau2 = 1.0 / (1.0 + gam2)
        i2_term[sl] = surf.cross_eval(prep, T1[sl], tau2).mean(axis=1)

    y_hat = i2_term + ratio * correction
    diag = {
        "max_density_ratio": float(ratio.max()),
        "snap_distance": float(getattr(surf, "last_snap_distance", 0.0)),
        "integrand_profile": (psi / nu * dens_nodes)[0].copy() if T1.size else None,
        "n_quad_nodes": int(nodes.size),
    }
    return PseudoOutcomeSet(t=T1, y_hat=y_hat, model="rosenbaum", diagnostics=diag)


def build_marginal_batch(
    X1, T1, Y1, bundle: NuisanceBundle, rows_I2: Dataset,
    sf: SensitivityFunction, quad: QuadratureRule,
) -> PseudoOutcomeSet:
    """Quantile/CVaR-bound pseudo-outcomes for a block of evaluation rows."""
    X1 = np.atleast_2d(X1)
    T1 = np.asarray(T1, dtype=float).ravel()
    Y1 = np.asarray(Y1, dtype=float).ravel()
    qsurf = bundle.quantile_surface
    csurf = bundle.cvar_surface
    msurf = bundle.mean_surface
    nodes = quad.nodes

    lam_nodes = np.maximum(sf.eval(T1[:, None], nodes[None, :]), 1.0)
    tau_nodes = 1.0 / (1.0 + lam_nodes)
    q = qsurf.eval(X1, T1, tau_nodes)
    cvar = csurf.eval(X1, T1, tau_nodes)
    mean = msurf.eval(X1, T1)
    zeta = lam_nodes * mean[:, None] - (lam_nodes - 1.0) * cvar
    diff = Y1[:, None] - q
    rho = np.maximum(diff, 0.0) / lam_nodes - lam_nodes * np.maximum(-diff, 0.0)
    integrand = rho + q - zeta

    dens_nodes, denom, fbar = _density_pieces(bundle, X1, T1, nodes, rows_I2.X)
    correction = (integrand * dens_nodes) @ quad.weights
    ratio = fbar / denom

    mprep = msurf.prepare_rows(rows_I2.X)
    cprep = csurf.prepare_rows(rows_I2.X)
    i2_term = np.empty(T1.size)
    step = _i2_chunk_size(rows_I2.n, getattr(qsurf, "tau_grid", np.empty(1)).size)
    for s in range(0, T1.size, step):
        sl = slice(s, min(s + step, T1.size))
        lam2 = np.maximum(sf.eval(T1[sl, None], rows_I2.t[None, :]), 1.0)
        tau2 = 1.0 / (1.0 + lam2)
        m_cross = msurf.cross_eval(mprep, T1[sl])
        c_cross = csurf.cross_eval(cprep, T1[sl], tau2)
        i2_term[sl] = (lam2 * m_cross - (lam2 - 1.0) * c_cross).mean(axis=1)

    y_hat = i2_term + ratio * correction
    diag = {
        "max_density_ratio": float(ratio.max()),
        "snap_distance": float(getattr(qsurf, "last_snap_distance", 0.0)),
        "integrand_profile": (integrand * dens_nodes)[0].copy() if T1.size else None,
        "n_quad_nodes": int(nodes.size),
    }
    return PseudoOutcomeSet(t=T1, y_hat=y_hat, model="marginal", diagnostics=diag)


def build_rosenbaum_pseudo(row, bundle, rows_I2, sf, quad) -> PseudoOutcomeSample:
    """Single-row form of the expectile-bound pseudo-outcome."""
    x, t, y = row
    out = build_rosenbaum_batch(
        np.atleast_2d(np.asarray(x, dtype=float)), [t], [y], bundle, rows_I2, sf, quad
    )
    return PseudoOutcomeSample(float(t), float(out.y_hat[0]), "rosenbaum")


def build_marginal_pseudo(row, bundle, rows_I2, sf, quad) -> PseudoOutcomeSample:
    """Single-row form of the quantile/CVaR-bound pseudo-outcome."""
    x, t, y = row
    out = build_marginal_batch(
        np.atleast_2d(np.asarray(x, dtype=float)), [t], [y], bundle, rows_I2, sf, quad
    )
    return PseudoOutcomeSample(float(t), float(out.y_hat[0]), "marginal")


def build_all(
    ds: Dataset,
    plan: FoldPlan,
    config: RunConfig,
    bundle_factory=None,
    negated: bool = False,
):
    """Fit a bundle and build pseudo-outcomes for every role triple."""
    if bundle_factory is None:
        bundle_factory = lambda sub, cfg, neg: assemble_bundle(sub, cfg)
    sf = from_spec(config.sensitivity, ds.domain)
    sets = []
    for triple in plan.role_map:
        i1, i2, i3 = plan.triple_indices(triple)
        bundle = bundle_factory(ds.subset(i3), config, negated)
        quad = pipeline_rule(bundle, config, ds.domain)
        rows_I2 = ds.subset(i2)
        builder = build_rosenbaum_batch if config.model == "rosenbaum" else build_marginal_batch
        out = builder(ds.X[i1], ds.t[i1], ds.y[i1], bundle, rows_I2, sf, quad)
        out.diagnostics["triple"] = (triple.i1_folds, triple.i2_fold, triple.i3_fold)
        sets.append(out)
    return sets
