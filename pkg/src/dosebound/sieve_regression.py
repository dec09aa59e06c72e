"""Second-stage series regression of pseudo-outcomes on an exposure basis.

Fits nonparametric OLS on a basis system whose first element is the constant
function, forms the heteroskedasticity-robust sandwich matrix, and evaluates
the curve with pointwise normal confidence intervals.  Cross-fitted curves
are averaged pointwise with a conservative standard-error rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .core_data import BasisSpec, ExposureDomain
from .errors import FitError, InputError

_COND_LIMIT = 1e10


class BasisSystem:
    """Evaluator for the first J basis functions on an exposure domain."""

    def __init__(self, spec: BasisSpec, domain: ExposureDomain):
        self.spec = spec
        self.domain = domain
        self.J = spec.J
        self.kind = spec.kind
        if self.kind == "bspline" and self.J < 4:
            raise InputError("cubic B-spline basis needs J >= 4")
        if self.kind == "fourier" and self.J % 2 == 0:
            # pairs of sin/cos plus the constant
            raise InputError("fourier basis needs odd J (1 + sin/cos pairs)")
        self._bspline = self._make_bspline() if self.kind == "bspline" else None
        probe = np.linspace(domain.lo, domain.hi, 2001)
        vals = self.evaluate(probe)
        self.xi_J = float(np.max(np.linalg.norm(vals, axis=1)))
        gram = vals.T @ vals / probe.size
        self.gram_condition = float(np.linalg.cond(gram))

    def _unit(self, t):
        t = np.asarray(t, dtype=float)
        return (2.0 * t - self.domain.lo - self.domain.hi) / self.domain.width

    def _make_bspline(self):
        from scipy.interpolate import BSpline

        k = 3
        n_interior = self.J - k - 1
        interior = np.linspace(self.domain.lo, self.domain.hi, n_interior + 2)[1:-1]
        knots = np.concatenate(
            (
                np.repeat(self.domain.lo, k + 1),
                interior,
                np.repeat(self.domain.hi, k + 1),
            )
        )
        return BSpline.design_matrix, knots, k

    def evaluate(self, t) -> np.ndarray:
        """Basis matrix of shape (len(t), J); column 0 is identically one."""
        t = np.asarray(t, dtype=float).ravel()
        if self.kind == "polynomial":
            u = self._unit(t)
            return np.vander(u, self.J, increasing=True)
        if self.kind == "legendre":
            u = self._unit(t)
            out = np.empty((t.size, self.J))
            for j in range(self.J):
                coef = np.zeros(j + 1)
                coef[j] = 1.0
                # Scaled to unit second moment under the uniform measure.
                out[:, j] = np.polynomial.legendre.legval(u, coef) * np.sqrt(2 * j + 1)
            return out
        if self.kind == "fourier":
            u = (t - self.domain.lo) / self.domain.width
            out = np.empty((t.size, self.J))
            out[:, 0] = 1.0
            for pair in range((self.J - 1) // 2):
                freq = 2.0 * np.pi * (pair + 1)
                out[:, 1 + 2 * pair] = np.sqrt(2.0) * np.cos(freq * u)
                out[:, 2 + 2 * pair] = np.sqrt(2.0) * np.sin(freq * u)
            return out
        design, knots, k = self._bspline
        mat = design(np.clip(t, self.domain.lo, self.domain.hi), knots, k).toarray()
        # Replace the first spline column with the constant; the span is
        # unchanged because B-splines form a partition of unity.
        mat[:, 0] = 1.0
        return mat


def make_basis(spec: BasisSpec, domain: ExposureDomain) -> BasisSystem:
    return BasisSystem(spec, domain)


@dataclass(frozen=True)
class BoundCurve:
    beta: np.ndarray
    Q_hat: np.ndarray
    Omega_hat: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_used: int
    alpha: float
    basis_spec: BasisSpec

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,estimate,se,ci_lo,ci_hi\n")
            for i in range(self.grid.size):
                row = (self.grid[i], self.values[i], self.se[i], self.ci_lo[i], self.ci_hi[i])
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "Omega_hat": self.Omega_hat.tolist(),
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "se": self.se.tolist(),
            "ci_lo": self.ci_lo.tolist(),
            "ci_hi": self.ci_hi.tolist(),
            "n_used": self.n_used,
            "alpha": self.alpha,
            "basis": {"kind": self.basis_spec.kind, "J": self.basis_spec.J},
        }


def _spd_solve(Q: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(Q)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > _COND_LIMIT:
        raise FitError(
            "design Gram matrix is singular or ill-conditioned "
            f"(condition number {eigvals[-1] / max(eigvals[0], 1e-300):.3e}); "
            "reduce the basis dimension J or switch to an orthogonal basis"
        )
    return cho_solve(cho_factor(Q, lower=True), rhs)


def fit_ols(t_values, y_values, basis: BasisSystem):
    """Least squares of pseudo-outcomes on the basis; returns (beta, Q_hat).

    Requires more samples than basis functions and a well-conditioned
    empirical Gram matrix.
    """
    t_values = np.asarray(t_values, dtype=float).ravel()
    y_values = np.asarray(y_values, dtype=float).ravel()
    n = t_values.size
    if n != y_values.size:
        raise InputError("t and y lengths differ")
    if n <= basis.J:
        raise InputError(f"need more than J={basis.J} samples, got {n}")
    phi = basis.evaluate(t_values)
    Q_hat = phi.T @ phi / n
    beta = _spd_solve(Q_hat, phi.T @ y_values / n)
    return beta, Q_hat


def estimate_variance(t_values, y_values, basis: BasisSystem, beta, Q_hat) -> np.ndarray:
    """Sandwich matrix Q^{-1} [ mean of eps^2 phi phi^T ] Q^{-1}."""
    t_values = np.asarray(t_values, dtype=float).ravel()
    y_values = np.asarray(y_values, dtype=float).ravel()
    phi = basis.evaluate(t_values)
    resid = y_values - phi @ beta
    sigma = (phi * resid[:, None] ** 2).T @ phi / t_values.size
    qinv_sigma = _spd_solve(Q_hat, sigma)
    omega = _spd_solve(Q_hat, qinv_sigma.T)
    return 0.5 * (omega + omega.T)


def predict_curve(
    beta, Omega_hat, basis: BasisSystem, grid, alpha: float, n_used: int, q_hat=None
) -> BoundCurve:
    """Evaluate the fitted curve with pointwise (1 - alpha) intervals."""
    grid = np.asarray(grid, dtype=float).ravel()
    if np.any(grid < basis.domain.lo) or np.any(grid > basis.domain.hi):
        raise InputError("evaluation grid extends outside the exposure domain")
    phi = basis.evaluate(grid)
    values = phi @ beta
    quad_form = np.einsum("ij,jk,ik->i", phi, Omega_hat, phi)
    se = np.sqrt(np.maximum(quad_form, 0.0) / n_used)
    z = norm.ppf(1.0 - alpha / 2.0)
    return BoundCurve(
        beta=np.asarray(beta, dtype=float),
        Q_hat=np.zeros((basis.J, basis.J)) if q_hat is None else np.asarray(q_hat),
        Omega_hat=np.asarray(Omega_hat, dtype=float),
        grid=grid,
        values=values,
        se=se,
        ci_lo=values - z * se,
        ci_hi=values + z * se,
        n_used=n_used,
        alpha=alpha,
        basis_spec=basis.spec,
    )


def fit_curve(t_values, y_values, basis: BasisSystem, grid, alpha: float) -> BoundCurve:
    """Full second stage: OLS, sandwich variance, curve with intervals."""
    beta, Q_hat = fit_ols(t_values, y_values, basis)
    omega = estimate_variance(t_values, y_values, basis, beta, Q_hat)
    n = np.asarray(t_values).size
    return predict_curve(beta, omega, basis, grid, alpha, n, q_hat=Q_hat)


def negate_curve(curve: BoundCurve) -> BoundCurve:
    """Mirror a curve through zero, swapping the interval endpoints."""
    return BoundCurve(
        beta=-curve.beta,
        Q_hat=curve.Q_hat,
        Omega_hat=curve.Omega_hat,
        grid=curve.grid,
        values=-curve.values,
        se=curve.se,
        ci_lo=-curve.ci_hi,
        ci_hi=-curve.ci_lo,
        n_used=curve.n_used,
        alpha=curve.alpha,
        basis_spec=curve.basis_spec,
    )


def cross_fit_average(curves) -> BoundCurve:
    """Pointwise mean across role triples.

    Standard errors are averaged rather than recombined through the unknown
    cross-triple covariance, which is conservative.
    """
    curves = list(curves)
    if not curves:
        raise InputError("no curves to average")
    first = curves[0]
    for c in curves[1:]:
        if c.grid.shape != first.grid.shape or not np.allclose(c.grid, first.grid):
            raise InputError("curves must share an identical grid")
        if c.basis_spec != first.basis_spec:
            raise InputError("curves must share an identical basis")
    if len(curves) == 1:
        return first
    values = np.mean([c.values for c in curves], axis=0)
    se = np.mean([c.se for c in curves], axis=0)
    beta = np.mean([c.beta for c in curves], axis=0)
    omega = np.mean([c.Omega_hat for c in curves], axis=0)
    q_hat = np.mean([c.Q_hat for c in curves], axis=0)
    z = norm.ppf(1.0 - first.alpha / 2.0)
    return BoundCurve(
        beta=beta,
        Q_hat=q_hat,
        Omega_hat=omega,
        grid=first.grid,
        values=values,
        se=se,
        ci_lo=values - z * se,
        ci_hi=values + z * se,
        n_used=int(round(np.mean([c.n_used for c in curves]))),
        alpha=first.alpha,
        basis_spec=first.basis_spec,
    )
