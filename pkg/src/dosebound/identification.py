"""Closed-form conditional bounds on weighted discrete outcome samples.

Two lower bounds on the mean of a reweighted outcome law:

* the expectile bound: theta = sup{mu : sum_i w_i psi_mu(y_i) >= 0} with
  psi_mu(y) = (y - mu)_+ - gamma (y - mu)_-, solved exactly by inverting the
  piecewise-linear map mu -> sum_i w_i psi_mu(y_i);
* the quantile/CVaR bound: zeta = q + sum_i w_i rho_q(y_i) with
  rho_q(y) = (y - q)_+ / lam - lam (y - q)_- and q the (lam + 1)^{-1}
  quantile of the weighted sample.

Both collapse to the weighted mean at parameter 1 and shrink as the
parameter grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

_WEIGHT_TOL = 1e-12


class WeightedSample:
    """Finite outcome values with nonnegative weights summing to one."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise InputError("weighted sample must be nonempty")
        if not np.all(np.isfinite(values)):
            raise InputError("sample values must be finite")
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=float).ravel()
            if weights.size != values.size:
                raise InputError("values and weights must have matching length")
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise InputError("weights must be nonnegative and finite")
            if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
                raise InputError(f"weights must sum to 1, got {weights.sum()!r}")
        order = np.argsort(values, kind="stable")
        values = values[order]
        weights = weights[order]
        # Merge duplicates so breakpoint logic sees strictly increasing values.
        distinct, start = np.unique(values, return_index=True)
        merged = np.add.reduceat(weights, start)
        self.values = distinct
        self.weights = merged
        self.values.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def mean(self) -> float:
        return float(self.values @ self.weights)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class ConditionalBound:
    value: float
    kind: str
    nu: float | None = None
    q: float | None = None
    tau: float | None = None


def _psi_sum(ws: WeightedSample, mu: float, gamma: float) -> float:
    d = ws.values - mu
    return float(ws.weights @ (np.maximum(d, 0.0) - gamma * np.maximum(-d, 0.0)))


def solve_expectile(ws: WeightedSample, gamma: float) -> ConditionalBound:
    """Exact expectile bound by piecewise-linear inversion.

    The map g(mu) = sum_i w_i psi_mu(y_i) is continuous, piecewise linear,
    and strictly decreasing with slope -(1 + (gamma - 1) F(mu)) between
    breakpoints, so the supremum of {mu : g(mu) >= 0} is its unique root.
    Also returns nu = P(y > theta) + gamma P(y <= theta).
    """
    if gamma < 1.0:
        raise InputError(f"gamma must be >= 1, got {gamma}")
    v = ws.values
    w = ws.weights
    if v.size == 1:
        theta = float(v[0])
    else:
        # g evaluated at every breakpoint, vectorized over mu.
        diffs = v[None, :] - v[:, None]
        g_at = (np.maximum(diffs, 0.0) - gamma * np.maximum(-diffs, 0.0)) @ w
        if g_at[0] <= 0.0:
            theta = float(v[0])
        else:
            k = int(np.searchsorted(-g_at, 0.0, side="right")) - 1
            k = min(max(k, 0), v.size - 2)
            # Walk forward over zero-slope ties is unnecessary: slope < 0 always.
            cdf = ws.cdf()
            slope = 1.0 + (gamma - 1.0) * cdf[k]
            theta = float(v[k] + g_at[k] / slope)
            theta = min(theta, float(v[k + 1]))
    frac_le = float(ws.weights[ws.values <= theta].sum())
    nu = (1.0 - frac_le) + gamma * frac_le
    return ConditionalBound(value=theta, kind="rosenbaum_theta", nu=nu)


def solve_quantile(ws: WeightedSample, tau: float) -> float:
    """Left-continuous inverse of the weighted empirical CDF."""
    if not 0.0 < tau < 1.0:
        raise InputError(f"tau must lie in (0, 1), got {tau}")
    cdf = ws.cdf()
    idx = int(np.searchsorted(cdf, tau - _WEIGHT_TOL, side="left"))
    idx = min(idx, ws.values.size - 1)
    return float(ws.values[idx])


def marginal_bound(ws: WeightedSample, lam: float) -> ConditionalBound:
    """Quantile-anchored bound zeta = q + E[rho_q(Y)] at level 1/(lam + 1)."""
    if lam < 1.0:
        raise InputError(f"lambda must be >= 1, got {lam}")
    tau = 1.0 / (lam + 1.0)
    q = solve_quantile(ws, tau)
    d = ws.values - q
    rho = np.maximum(d, 0.0) / lam - lam * np.maximum(-d, 0.0)
    zeta = q + float(ws.weights @ rho)
    return ConditionalBound(value=zeta, kind="marginal_zeta", q=q, tau=tau)


def marginal_bound_cvar_form(mean: float, cvar: float, lam: float) -> float:
    """Equivalent tail-mean form: lam * mean - (lam - 1) * cvar.

    Requires cvar >= mean when lam > 1, since the mean above a quantile
    cannot fall below the overall mean.
    """
    if lam < 1.0:
        raise InputError(f"lambda must be >= 1, got {lam}")
    if lam > 1.0 and cvar < mean - 1e-12:
        raise InputError("tail mean (cvar) must be >= overall mean")
    return lam * mean - (lam - 1.0) * cvar


def expectile_objective(ws: WeightedSample, g: float, gamma: float) -> float:
    """Asymmetric squared loss whose minimizer is the expectile bound."""
    d = ws.values - g
    return float(
        ws.weights @ (np.maximum(d, 0.0) ** 2 + gamma * np.maximum(-d, 0.0) ** 2)
    )


def psi_residual(ws: WeightedSample, theta: float, gamma: float) -> float:
    """sum_i w_i psi_theta(y_i); zero at the expectile bound off flats."""
    return _psi_sum(ws, theta, gamma)
