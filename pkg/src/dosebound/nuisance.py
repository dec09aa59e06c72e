"""Built-in nuisance learners fitted on the I3 fold.

All learners are penalized linear sieves on a tensor basis of polynomial
features in the covariates and the exposure: a softmax bin classifier for
the conditional exposure density, iteratively reweighted least squares for
expectile and quantile surfaces across a tau grid, and ridge fits for the
tail CDF, conditional mean, and tail-mean (CVaR) ingredients.  Fitted
evaluators are pure and deterministic; monotone-in-tau surfaces are repaired
by pool-adjacent-violators at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_data import Dataset, ExposureDomain, LearnerSpec, RunConfig
from .errors import FitError, InputError

# ---------------------------------------------------------------------------
# shared feature machinery


def _xfeatures(X: np.ndarray, deg: int) -> np.ndarray:
    """[1, x_1..x_p, x_1^2..x_p^2, ...] additive polynomial features."""
    n, p = X.shape
    cols = [np.ones(n)]
    for d in range(1, deg + 1):
        cols.extend(X[:, j] ** d for j in range(p))
    return np.column_stack(cols)


def _tpoly(t, deg: int, domain: ExposureDomain) -> np.ndarray:
    u = (2.0 * np.asarray(t, dtype=float) - domain.lo - domain.hi) / domain.width
    return np.vander(np.atleast_1d(u), deg + 1, increasing=True)


def _tensor(xf: np.ndarray, tp: np.ndarray) -> np.ndarray:
    n = xf.shape[0]
    return (xf[:, :, None] * tp[:, None, :]).reshape(n, -1)


def _ridge_solve(phi, targets, lam, weights=None):
    """Penalized least squares; the intercept column stays unpenalized."""
    n, F = phi.shape
    if weights is None:
        gram = phi.T @ phi
        rhs = phi.T @ targets
    else:
        wphi = phi * weights[:, None]
        gram = phi.T @ wphi
        rhs = wphi.T @ targets
    pen = np.full(F, lam * n)
    pen[0] = 0.0
    gram = gram + np.diag(pen)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitError(
            f"degenerate sieve design (condition number {cond:.3e}); "
            "reduce basis degrees or add data"
        )
    return np.linalg.solve(gram, rhs)


def _pava(v: np.ndarray) -> np.ndarray:
    """Equal-weight pool-adjacent-violators; L2 isotonic projection."""
    vals = []
    cnts = []
    for x in v:
        vals.append(float(x))
        cnts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2 = vals.pop()
            c2 = cnts.pop()
            v1 = vals.pop()
            c1 = cnts.pop()
            vals.append((v1 * c1 + v2 * c2) / (c1 + c2))
            cnts.append(c1 + c2)
    return np.repeat(vals, cnts)


def repair_rows(mat: np.ndarray) -> np.ndarray:
    """Apply PAV along the last axis, touching only rows that violate."""
    flat = mat.reshape(-1, mat.shape[-1])
    bad = np.flatnonzero((np.diff(flat, axis=1) < 0).any(axis=1))
    if bad.size:
        flat = flat.copy()
        for i in bad:
            flat[i] = _pava(flat[i])
        return flat.reshape(mat.shape)
    return mat


# ---------------------------------------------------------------------------
# conditional exposure density (binned softmax classifier)


class BinnedConditionalDensity:
    """Piecewise-constant conditional density from a softmax bin classifier.

    Bin masses are floored and exactly renormalized per row, so the density
    is everywhere >= the floor and integrates to one over the domain.
    """

    def __init__(self, W, deg_x, domain, bins, floor):
        self.W = W
        self.deg_x = deg_x
        self.domain = domain
        self.bins = bins
        self.floor = floor
        self.bin_width = domain.width / bins
        self.bin_edges = np.linspace(domain.lo, domain.hi, bins + 1)

    def bin_of(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.floor((t - self.domain.lo) / self.bin_width).astype(int)
        return np.clip(idx, 0, self.bins - 1)

    def row_mass(self, X) -> np.ndarray:
        """Per-row bin masses (n, B), floored at floor*bin_width, summing 1."""
        z = _xfeatures(np.atleast_2d(X), self.deg_x)
        logits = z @ self.W
        logits -= logits.max(axis=1, keepdims=True)
        mass = np.exp(logits)
        mass /= mass.sum(axis=1, keepdims=True)
        return _floor_mass(mass, self.floor * self.bin_width)

    def at(self, t, X) -> np.ndarray:
        mass = self.row_mass(X)
        idx = self.bin_of(t)
        return mass[np.arange(mass.shape[0]), idx] / self.bin_width

    def grid(self, t_nodes, X) -> np.ndarray:
        """(n_rows, n_nodes) density values."""
        mass = self.row_mass(X)
        return mass[:, self.bin_of(t_nodes)] / self.bin_width


def _floor_mass(mass: np.ndarray, lower: float) -> np.ndarray:
    """Project rows of the simplex onto {q >= lower, sum q = 1} exactly.

    Floored cells are pinned at the bound; remaining mass is spread over the
    free cells in proportion to their raw values, iterating if the rescale
    pushes a new cell under the bound.
    """
    B = mass.shape[1]
    if lower * B >= 1.0:
        raise FitError("density floor too high: floor * width * bins >= 1")
    out = mass.copy()
    pinned = np.zeros_like(out, dtype=bool)
    for _ in range(B):
        viol = (out < lower) & ~pinned
        if not viol.any():
            break
        pinned |= viol
        free = ~pinned
        budget = 1.0 - lower * pinned.sum(axis=1)
        free_total = np.where(free, mass, 0.0).sum(axis=1)
        scale = np.divide(budget, free_total, out=np.ones_like(budget), where=free_total > 0)
        out = np.where(pinned, lower, mass * scale[:, None])
    return out


def fit_conditional_density(ds_I3: Dataset, spec: LearnerSpec, floor: float) -> BinnedConditionalDensity:
    """Multinomial softmax regression of exposure-bin membership on
    polynomial covariate features, fitted by damped Newton steps."""
    B = spec.bins
    if ds_I3.n < 10 * B:
        raise InputError(f"conditional density needs >= {10 * B} rows, got {ds_I3.n}")
    domain = ds_I3.domain
    width = domain.width / B
    bin_idx = np.clip(((ds_I3.t - domain.lo) / width).astype(int), 0, B - 1)
    if np.unique(bin_idx).size < 2:
        raise FitError("degenerate exposure: all observations fall in one bin")
    z = _xfeatures(ds_I3.X, spec.deg_x)
    n, F = z.shape
    cond = np.linalg.cond(z.T @ z)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitError(f"rank-deficient covariate features (condition number {cond:.3e})")
    onehot = np.zeros((n, B))
    onehot[np.arange(n), bin_idx] = 1.0
    W = np.zeros((F, B))
    lam = spec.density_ridge
    pen_mask = np.ones((F, B))
    pen_mask[0] = 0.0  # intercepts carry the marginal bin frequencies

    def _loss(Wc):
        logits = z @ Wc
        logits -= logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(logits).sum(axis=1))
        nll = -(logits[np.arange(n), bin_idx] - lse).mean()
        return nll + 0.5 * lam * float((pen_mask * Wc * Wc).sum())

    prev = _loss(W)
    for _ in range(spec.max_iter):
        logits = z @ W
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        grad = z.T @ (P - onehot) / n + lam * pen_mask * W
        # Block Newton: H[(i,a),(j,b)] = E[z_i z_j P_a (1[a=b] - P_b)] + ridge
        H = -np.einsum("ni,na,nj,nb->iajb", z, P, z, P).reshape(F * B, F * B) / n
        diag = np.einsum("ni,na,nj->iaj", z, P, z) / n
        H += _expand_diag(diag, F, B)
        H[np.arange(F * B), np.arange(F * B)] += lam * pen_mask.reshape(-1) + 1e-10
        try:
            step = np.linalg.solve(H, grad.reshape(-1)).reshape(F, B)
        except np.linalg.LinAlgError:
            raise FitError("singular Hessian in softmax density fit") from None
        size = 1.0
        for _ in range(30):
            cand = W - size * step
            cur = _loss(cand)
            if cur <= prev + 1e-12:
                break
            size *= 0.5
        W = W - size * step
        if abs(prev - cur) < spec.tol * max(1.0, abs(prev)):
            prev = cur
            break
        prev = cur
    return BinnedConditionalDensity(W, spec.deg_x, domain, B, floor)


def _expand_diag(diag, F, B):
    """Scatter einsum 'iaja' blocks back into a dense (FB, FB) matrix."""
    out = np.zeros((F, B, F, B))
    for a in range(B):
        out[:, a, :, a] = diag[:, a, :]
    return out.reshape(F * B, F * B)


# ---------------------------------------------------------------------------
# tau-indexed sieve surfaces (expectile / quantile / cvar)


class SieveTauSurface:
    """Linear sieve surface indexed by a tau grid.

    Queries snap tau to the nearest grid point; full-grid profiles are
    monotone-repaired before the snapped column is read when `isotonic` is
    set.  `last_snap_distance` records the largest snapping gap seen, for
    diagnostics.
    """

    def __init__(self, coef, tau_grid, deg_x, deg_t, domain, isotonic=True):
        self.coef = coef  # (F, n_tau)
        self.tau_grid = np.asarray(tau_grid, dtype=float)
        self.deg_x = deg_x
        self.deg_t = deg_t
        self.domain = domain
        self.isotonic = isotonic
        self.last_snap_distance = 0.0
        ft = deg_t + 1
        self._coef3 = coef.reshape(-1, ft, coef.shape[1])  # (Fx, Ft, n_tau)

    def snap(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        idx = np.clip(
            np.searchsorted(self.tau_grid, tau), 1, self.tau_grid.size - 1
        )
        left = self.tau_grid[idx - 1]
        right = self.tau_grid[idx]
        idx = np.where(np.abs(tau - left) <= np.abs(right - tau), idx - 1, idx)
        gap = float(np.max(np.abs(self.tau_grid[idx] - tau), initial=0.0))
        self.last_snap_distance = max(self.last_snap_distance, gap)
        return idx

    def profile(self, X, t) -> np.ndarray:
        """Full tau-grid values at paired (x, t) points; (n, n_tau)."""
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        tp = _tpoly(np.broadcast_to(np.asarray(t, dtype=float), (xf.shape[0],)), self.deg_t, self.domain)
        prof = _tensor(xf, tp) @ self.coef
        return repair_rows(prof) if self.isotonic else prof

    def eval(self, X, t, tau) -> np.ndarray:
        """Values at paired rows; tau may be (n,) or (n, k)."""
        tau = np.asarray(tau, dtype=float)
        prof = self.profile(X, t)
        idx = self.snap(tau)
        if tau.ndim == 1:
            return prof[np.arange(prof.shape[0]), idx]
        return np.take_along_axis(prof, idx, axis=1)

    def prepare_rows(self, X) -> np.ndarray:
        """Precompute (m, Ft, n_tau) blocks for repeated cross evaluation."""
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        return np.einsum("mf,ftk->mtk", xf, self._coef3)

    def cross_profiles(self, prepared, t_vals) -> np.ndarray:
        """(c, m, n_tau) profiles of rows `prepared` at exposures t_vals."""
        tp = _tpoly(t_vals, self.deg_t, self.domain)
        prof = np.einsum("mtk,ct->cmk", prepared, tp)
        return repair_rows(prof) if self.isotonic else prof

    def cross_eval(self, prepared, t_vals, tau) -> np.ndarray:
        """(c, m) values of row j's surface at exposure t_c and tau[c, j]."""
        prof = self.cross_profiles(prepared, t_vals)
        idx = self.snap(np.asarray(tau, dtype=float))
        return np.take_along_axis(prof, idx[:, :, None], axis=2)[:, :, 0]


class SieveMeanSurface:
    def __init__(self, coef, deg_x, deg_t, domain):
        self.coef = coef
        self.deg_x = deg_x
        self.deg_t = deg_t
        self.domain = domain
        self._coef2 = coef.reshape(-1, deg_t + 1)

    def eval(self, X, t) -> np.ndarray:
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        tp = _tpoly(np.broadcast_to(np.asarray(t, dtype=float), (xf.shape[0],)), self.deg_t, self.domain)
        return _tensor(xf, tp) @ self.coef

    def prepare_rows(self, X) -> np.ndarray:
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        return xf @ self._coef2  # (m, Ft)

    def cross_eval(self, prepared, t_vals) -> np.ndarray:
        """(c, m) values of row j's conditional mean at exposure t_c."""
        tp = _tpoly(t_vals, self.deg_t, self.domain)
        return tp @ prepared.T


class SieveCvarSurface:
    """Tail mean above the tau-quantile: c = q + E[(Y-q)_+ | x,t]/(1-tau)."""

    def __init__(self, quantile: SieveTauSurface, pospart_coef, tau_grid):
        self.quantile = quantile
        self.pospart_coef = pospart_coef  # (F, n_tau)
        self.tau_grid = np.asarray(tau_grid, dtype=float)
        ft = quantile.deg_t + 1
        self._pos3 = pospart_coef.reshape(-1, ft, pospart_coef.shape[1])
        self.domain = quantile.domain
        self.deg_x = quantile.deg_x
        self.deg_t = quantile.deg_t

    def _check_tau(self, tau):
        if np.any(np.asarray(tau) >= 1.0):
            raise InputError("cvar undefined at tau = 1")

    def profile(self, X, t) -> np.ndarray:
        qprof = self.quantile.profile(X, t)
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        tp = _tpoly(np.broadcast_to(np.asarray(t, dtype=float), (xf.shape[0],)), self.deg_t, self.domain)
        pos = np.maximum(_tensor(xf, tp) @ self.pospart_coef, 0.0)
        return qprof + pos / (1.0 - self.tau_grid)[None, :]

    def eval(self, X, t, tau) -> np.ndarray:
        self._check_tau(tau)
        tau = np.asarray(tau, dtype=float)
        prof = self.profile(X, t)
        idx = self.quantile.snap(tau)
        if tau.ndim == 1:
            return prof[np.arange(prof.shape[0]), idx]
        return np.take_along_axis(prof, idx, axis=1)

    def prepare_rows(self, X):
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        return (
            self.quantile.prepare_rows(X),
            np.einsum("mf,ftk->mtk", xf, self._pos3),
        )

    def cross_profiles(self, prepared, t_vals) -> np.ndarray:
        qprep, pprep = prepared
        qprof = self.quantile.cross_profiles(qprep, t_vals)
        tp = _tpoly(t_vals, self.deg_t, self.domain)
        pos = np.maximum(np.einsum("mtk,ct->cmk", pprep, tp), 0.0)
        return qprof + pos / (1.0 - self.tau_grid)[None, None, :]

    def cross_eval(self, prepared, t_vals, tau) -> np.ndarray:
        self._check_tau(tau)
        prof = self.cross_profiles(prepared, t_vals)
        idx = self.quantile.snap(np.asarray(tau, dtype=float))
        return np.take_along_axis(prof, idx[:, :, None], axis=2)[:, :, 0]


class SieveTailCdf:
    """Conditional CDF from indicator regressions on an outcome grid."""

    def __init__(self, coef, y_grid, deg_x, deg_t, domain):
        self.coef = coef  # (F, G)
        self.y_grid = y_grid
        self.deg_x = deg_x
        self.deg_t = deg_t
        self.domain = domain

    def profile(self, X, t) -> np.ndarray:
        """CDF values on the fitted outcome grid, clipped and isotone in y."""
        xf = _xfeatures(np.atleast_2d(X), self.deg_x)
        tp = _tpoly(np.broadcast_to(np.asarray(t, dtype=float), (xf.shape[0],)), self.deg_t, self.domain)
        prof = np.clip(_tensor(xf, tp) @ self.coef, 0.0, 1.0)
        return repair_rows(prof)

    def eval(self, X, t, y) -> np.ndarray:
        """F(y | x, t) for paired rows; y may be (n,) or (n, k)."""
        y = np.asarray(y, dtype=float)
        prof = self.profile(X, t)
        yq = y if y.ndim == 2 else y[:, None]
        grid = self.y_grid
        idx = np.clip(np.searchsorted(grid, yq), 1, grid.size - 1)
        y0 = grid[idx - 1]
        y1 = grid[idx]
        f0 = np.take_along_axis(prof, idx - 1, axis=1)
        f1 = np.take_along_axis(prof, idx, axis=1)
        w = np.clip((yq - y0) / (y1 - y0), 0.0, 1.0)
        out = f0 + w * (f1 - f0)
        # Constant extension beyond the fitted grid; the edge fits are ~0 / ~1
        # because their indicator targets are all-zero / all-one.
        out = np.where(yq <= grid[0], np.take_along_axis(prof, np.zeros_like(idx), axis=1), out)
        out = np.where(yq >= grid[-1], np.take_along_axis(prof, np.full_like(idx, grid.size - 1), axis=1), out)
        return out if y.ndim == 2 else out[:, 0]


# ---------------------------------------------------------------------------
# surface fitting


def _irls_expectile(phi, y, tau, lam, max_iter, beta0):
    """Asymmetric least squares via sign-reweighted ridge iterations.

    Weights are 2*tau / 2*(1-tau) so tau = 1/2 reproduces the plain ridge
    mean fit exactly.  Converges when the residual sign partition repeats.
    """
    beta = beta0
    signs = None
    for _ in range(max_iter):
        resid = y - phi @ beta
        new_signs = resid > 0
        if signs is not None and np.array_equal(new_signs, signs):
            return beta
        signs = new_signs
        w = np.where(signs, 2.0 * tau, 2.0 * (1.0 - tau))
        beta = _ridge_solve(phi, y, lam, weights=w)
    raise FitError(f"expectile IRLS did not converge at tau={tau:.4f}")


def _irls_quantile(phi, y, tau, lam, max_iter, beta0):
    """Pinball-loss fit by majorize-minimize reweighting.

    The |r| majorizer is smoothed at eps, so the fit targets a slightly
    smoothed pinball loss; MM decreases it monotonically and plateaus fast,
    so a loose relative-change stop is appropriate.
    """
    eps = 1e-4 * max(float(np.std(y)), 1e-8)
    beta = beta0
    for _ in range(min(max_iter, 60)):
        resid = y - phi @ beta
        pen = np.where(resid > 0, tau, 1.0 - tau)
        w = pen / np.maximum(np.abs(resid), eps)
        new_beta = _ridge_solve(phi, y, lam, weights=w)
        delta = float(np.max(np.abs(new_beta - beta)))
        beta = new_beta
        if delta < 1e-6 * max(1.0, float(np.max(np.abs(beta)))):
            return beta
    return beta  # monotone descent; last iterate is a valid approximation


def pinball_loss(resid, tau) -> float:
    return float(np.mean(np.where(resid > 0, tau * resid, (tau - 1.0) * resid)))


def _design(ds: Dataset, spec: LearnerSpec) -> np.ndarray:
    xf = _xfeatures(ds.X, spec.deg_x)
    tp = _tpoly(ds.t, spec.deg_t, ds.domain)
    return _tensor(xf, tp)


def fit_mean_surface(ds_I3: Dataset, spec: LearnerSpec) -> SieveMeanSurface:
    phi = _design(ds_I3, spec)
    coef = _ridge_solve(phi, ds_I3.y, spec.ridge)
    return SieveMeanSurface(coef, spec.deg_x, spec.deg_t, ds_I3.domain)


def fit_expectile_surface(ds_I3: Dataset, spec: LearnerSpec) -> SieveTauSurface:
    """Per-tau asymmetric least squares across the grid, warm-started."""
    phi = _design(ds_I3, spec)
    taus = spec.tau_grid()
    coef = np.empty((phi.shape[1], taus.size))
    beta = _ridge_solve(phi, ds_I3.y, spec.ridge)
    for k, tau in enumerate(taus):
        beta = _irls_expectile(phi, ds_I3.y, tau, spec.ridge, spec.max_iter, beta)
        coef[:, k] = beta
    return SieveTauSurface(coef, taus, spec.deg_x, spec.deg_t, ds_I3.domain)


def fit_quantile_surface(ds_I3: Dataset, spec: LearnerSpec) -> SieveTauSurface:
    phi = _design(ds_I3, spec)
    taus = spec.tau_grid()
    coef = np.empty((phi.shape[1], taus.size))
    beta = _ridge_solve(phi, ds_I3.y, spec.ridge)
    for k, tau in enumerate(taus):
        beta = _irls_quantile(phi, ds_I3.y, tau, spec.ridge, spec.max_iter, beta)
        coef[:, k] = beta
    return SieveTauSurface(coef, taus, spec.deg_x, spec.deg_t, ds_I3.domain)


def fit_tail_cdf(ds_I3: Dataset, spec: LearnerSpec) -> SieveTailCdf:
    """Indicator regressions 1[Y <= y] on the sieve over an outcome grid."""
    phi = _design(ds_I3, spec)
    lo = float(ds_I3.y.min())
    hi = float(ds_I3.y.max())
    pad = 0.05 * max(hi - lo, 1e-8)
    y_grid = np.linspace(lo - pad, hi + pad, spec.y_grid_points)
    indicators = (ds_I3.y[:, None] <= y_grid[None, :]).astype(float)
    tail_coef = _ridge_solve(phi, indicators, spec.ridge)
    return SieveTailCdf(tail_coef, y_grid, spec.deg_x, spec.deg_t, ds_I3.domain)


def fit_tail_and_zeta(ds_I3: Dataset, quantile_surface: SieveTauSurface, spec: LearnerSpec):
    """Tail CDF, conditional mean, and CVaR ingredients on one design.

    The CDF regresses outcome indicators on the sieve for a grid of
    thresholds; the CVaR adds a positive-part regression against the fitted
    quantiles, divided by the tail mass downstream.
    """
    tail = fit_tail_cdf(ds_I3, spec)
    mean = fit_mean_surface(ds_I3, spec)
    phi = _design(ds_I3, spec)
    taus = quantile_surface.tau_grid
    qfit = phi @ quantile_surface.coef  # raw per-tau quantiles at I3 rows
    pospart = np.maximum(ds_I3.y[:, None] - qfit, 0.0)
    pos_coef = _ridge_solve(phi, pospart, spec.ridge)
    cvar = SieveCvarSurface(quantile_surface, pos_coef, taus)
    return tail, mean, cvar


# ---------------------------------------------------------------------------
# bundle assembly


@dataclass
class NuisanceBundle:
    """Fitted evaluators consumed by the pseudo-outcome builders.

    `density` exposes .at(t, X) pairwise, .grid(nodes, X), and optionally
    `bin_edges` used to align quadrature panels.  Surfaces are indexed by
    tau where applicable; `mean_surface` is always present.
    """

    model: str
    density: object
    expectile_surface: object = None
    tail_cdf: object = None
    quantile_surface: object = None
    mean_surface: object = None
    cvar_surface: object = None
    nested_split: tuple | None = None
    analytic: bool = False

    def marginal_density_basis(self, t_nodes, X_rows) -> np.ndarray:
        """Per-row density values used for marginal-density averaging."""
        return self.density.grid(np.atleast_1d(t_nodes), X_rows)


def assemble_bundle(ds_I3: Dataset, config: RunConfig) -> NuisanceBundle:
    """Fit the surfaces the configured model needs.

    With nested fitting the I3 rows are halved: expectile/quantile surfaces
    come from the first half, tail/mean/cvar ingredients from the second.
    The density always uses all of I3.
    """
    spec = config.learner
    floor = config.floor_for(ds_I3.domain)
    density = fit_conditional_density(ds_I3, spec, floor)

    if config.nested_fit:
        rng = np.random.default_rng(config.seed + 0x5EED)
        perm = rng.permutation(ds_I3.n)
        half = ds_I3.n // 2
        first_idx, second_idx = np.sort(perm[:half]), np.sort(perm[half:])
        ds_first = ds_I3.subset(first_idx)
        ds_second = ds_I3.subset(second_idx)
        nested = (first_idx, second_idx)
    else:
        ds_first = ds_second = ds_I3
        nested = None

    bundle = NuisanceBundle(model=config.model, density=density, nested_split=nested)
    if config.model == "rosenbaum":
        bundle.expectile_surface = fit_expectile_surface(ds_first, spec)
        bundle.tail_cdf = fit_tail_cdf(ds_second, spec)
        bundle.mean_surface = fit_mean_surface(ds_second, spec)
    else:
        quant = fit_quantile_surface(ds_first, spec)
        bundle.quantile_surface = quant
        tail, mean, cvar = fit_tail_and_zeta(ds_second, quant, spec)
        bundle.tail_cdf = tail
        bundle.mean_surface = mean
        bundle.cvar_surface = cvar
    return bundle
