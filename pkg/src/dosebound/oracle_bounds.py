"""Brute-force verification of the closed-form bounds.

Both bounds are linear programs over a likelihood-ratio reweighting L of a
discrete outcome law: minimize sum_i L_i y_i p_i subject to the mean
constraint sum_i L_i p_i = 1 and

* two-sided box L_i in [1/lam, lam] (quantile/CVaR bound), solved exactly by
  a fractional-greedy exchange: the optimal L is nonincreasing in y with at
  most one fractional coordinate;
* pairwise ratio cap L_i <= gamma * L_j for all i, j (expectile bound),
  whose optimum is two-valued {c * gamma, c} split at an outcome threshold,
  so enumerating the n + 1 thresholds is exact.

A dense scipy.linprog fallback spot-checks the structural claims themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import InputError, VerificationError
from .identification import WeightedSample, marginal_bound, solve_expectile


class DiscreteDist:
    """Strictly increasing support points with positive masses summing to 1."""

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=float).ravel()
        probs = np.asarray(probs, dtype=float).ravel()
        if values.size == 0 or values.size != probs.size:
            raise InputError("values and probs must be nonempty and matched")
        if np.any(np.diff(values) <= 0):
            raise InputError("support must be strictly increasing")
        if np.any(probs <= 0):
            raise InputError("probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InputError(f"probabilities must sum to 1, got {probs.sum()!r}")
        self.values = values
        self.probs = probs

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    def as_weighted_sample(self) -> WeightedSample:
        return WeightedSample(self.values, self.probs)


def oracle_marginal(dist: DiscreteDist, lam: float) -> float:
    """Exact box-constrained LP value by the fractional-greedy rule."""
    if lam < 1.0:
        raise InputError(f"lambda must be >= 1, got {lam}")
    y = dist.values
    p = dist.probs
    L = np.full_like(p, 1.0 / lam)
    budget = 1.0 - L @ p
    # Raise weights toward lam starting at the smallest outcome; one
    # coordinate may stop partway, which restores the mean constraint.
    for i in range(y.size):
        if budget <= 0.0:
            break
        room = (lam - 1.0 / lam) * p[i]
        take = min(room, budget)
        L[i] += take / p[i]
        budget -= take
    if budget > 1e-9:
        raise InputError("normalization infeasible; lambda < 1?")
    return float((L * y) @ p)


def oracle_rosenbaum(dist: DiscreteDist, gamma: float) -> float:
    """Exact ratio-capped LP value by full threshold enumeration.

    For each split point the two-valued solution puts c * gamma below and c
    above, with c = 1 / (gamma F + 1 - F) restoring the mean constraint.
    """
    if gamma < 1.0:
        raise InputError(f"gamma must be >= 1, got {gamma}")
    y = dist.values
    p = dist.probs
    cum_p = np.concatenate(([0.0], np.cumsum(p)))
    cum_py = np.concatenate(([0.0], np.cumsum(p * y)))
    total_py = cum_py[-1]
    best = math.inf
    for k in range(y.size + 1):
        F = cum_p[k]
        c = 1.0 / (gamma * F + 1.0 - F)
        obj = c * (gamma * cum_py[k] + (total_py - cum_py[k]))
        best = min(best, obj)
    return float(best)


def oracle_marginal_lp(dist: DiscreteDist, lam: float) -> float:
    """Dense LP solution of the box-constrained problem (scipy HiGHS)."""
    from scipy.optimize import linprog

    n = dist.values.size
    res = linprog(
        c=dist.values * dist.probs,
        A_eq=dist.probs[None, :],
        b_eq=[1.0],
        bounds=[(1.0 / lam, lam)] * n,
        method="highs",
    )
    if not res.success:
        raise InputError(f"LP solver failed: {res.message}")
    return float(res.fun)


def oracle_rosenbaum_lp(dist: DiscreteDist, gamma: float) -> float:
    """Dense LP over all pairwise ratio constraints L_i <= gamma L_j."""
    from scipy.optimize import linprog

    n = dist.values.size
    rows = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(n)
            row[i] = 1.0
            row[j] = -gamma
            rows.append(row)
    res = linprog(
        c=dist.values * dist.probs,
        A_ub=np.asarray(rows) if rows else None,
        b_ub=np.zeros(len(rows)) if rows else None,
        A_eq=dist.probs[None, :],
        b_eq=[1.0],
        bounds=[(0.0, None)] * n,
        method="highs",
    )
    if not res.success:
        raise InputError(f"LP solver failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class CrossCheckReport:
    marginal_at_value: float
    rosenbaum_at_value: float
    marginal_at_sqrt: float


_CHECK_TOL = 1e-9


def oracle_cross_check(dist: DiscreteDist, sf_value: float) -> CrossCheckReport:
    """Assert the feasible-set ordering and closed-form agreement.

    Checks marginal(v) <= rosenbaum(v) <= marginal(sqrt(v)) and that each
    oracle matches the matching closed form within 1e-9; raises
    VerificationError carrying the counterexample otherwise.
    """
    if sf_value < 1.0:
        raise InputError(f"sensitivity value must be >= 1, got {sf_value}")
    ws = dist.as_weighted_sample()
    m_v = oracle_marginal(dist, sf_value)
    r_v = oracle_rosenbaum(dist, sf_value)
    m_sqrt = oracle_marginal(dist, math.sqrt(sf_value))
    closed_m = marginal_bound(ws, sf_value).value
    closed_r = solve_expectile(ws, sf_value).value
    closed_m_sqrt = marginal_bound(ws, math.sqrt(sf_value)).value

    def _fail(msg):
        raise VerificationError(
            msg,
            counterexample={
                "values": dist.values.tolist(),
                "probs": dist.probs.tolist(),
                "sf_value": sf_value,
                "oracle": [m_v, r_v, m_sqrt],
                "closed_form": [closed_m, closed_r, closed_m_sqrt],
            },
        )

    if not (m_v <= r_v + _CHECK_TOL and r_v <= m_sqrt + _CHECK_TOL):
        _fail("ordering marginal(v) <= rosenbaum(v) <= marginal(sqrt v) violated")
    if abs(m_v - closed_m) > _CHECK_TOL:
        _fail("marginal oracle disagrees with closed form")
    if abs(r_v - closed_r) > _CHECK_TOL:
        _fail("rosenbaum oracle disagrees with closed form")
    if abs(m_sqrt - closed_m_sqrt) > _CHECK_TOL:
        _fail("marginal oracle at sqrt disagrees with closed form")
    return CrossCheckReport(m_v, r_v, m_sqrt)


def random_instances(count: int, max_support: int, param_range, seed: int):
    """Yield (DiscreteDist, sensitivity value) pairs for randomized suites."""
    if count < 1:
        raise InputError("instance count must be positive")
    if max_support < 2:
        raise InputError("max support must be at least 2")
    lo, hi = param_range
    if not (1.0 <= lo <= hi):
        raise InputError("parameter range must satisfy 1 <= lo <= hi")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m = int(rng.integers(2, max_support + 1))
        values = np.sort(rng.normal(0.0, 2.0, size=m))
        while np.any(np.diff(values) <= 1e-9):
            values = np.sort(rng.normal(0.0, 2.0, size=m))
        probs = rng.dirichlet(np.ones(m))
        probs = probs / probs.sum()
        value = float(rng.uniform(lo, hi))
        yield DiscreteDist(values, probs), value


def run_randomized_suite(count: int, max_support: int, param_range, seed: int) -> int:
    """Run cross checks over random instances; returns the instance count."""
    done = 0
    for dist, value in random_instances(count, max_support, param_range, seed):
        oracle_cross_check(dist, value)
        done += 1
    return done
