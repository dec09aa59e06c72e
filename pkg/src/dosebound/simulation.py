"""Synthetic data generator, oracle nuisances, and Monte Carlo harness.

The generating process draws four uniform covariates on [-0.5, 0.5], a Beta
exposure whose shapes depend on three of them through a logistic link, and a
heteroskedastic normal outcome around sin(pi t) + sin(2 pi t) plus a linear
covariate shift.  Because the covariates are mean zero the population
dose-response curve is the trig part alone.

Conditional normality makes every nuisance surface available in closed form
(expectiles through a one-dimensional root, quantiles and tail means through
the normal quantile and hazard), which the experiment runner uses to
separate the behavior of the pseudo-outcome/regression stages from learner
error.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, betaln, expit, ndtr, ndtri

from .core_data import Dataset, ExposureDomain, RunConfig, make_fold_plan
from .errors import InputError
from .nuisance import NuisanceBundle
from .pipeline import estimate_bound_curve

_T_LO = 0.01
_T_HI = 0.99
_MEAN_COEF = np.array([0.4, 0.2, 0.9, 0.0])
_SHAPE_COEF = np.array([0.2, 0.5, 0.7, 0.0])

DGP_DOMAIN = ExposureDomain(_T_LO, _T_HI)


@dataclass(frozen=True)
class DGPSpec:
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 100:
            raise InputError(f"simulation needs n >= 100, got {self.n}")


def _shape_param(X) -> np.ndarray:
    return expit(X @ _SHAPE_COEF)


def _outcome_mean(X, t) -> np.ndarray:
    return X @ _MEAN_COEF + np.sin(np.pi * t) + np.sin(2.0 * np.pi * t)


def _outcome_sd(X, t) -> np.ndarray:
    return np.sqrt((1.0 + X[:, 3] ** 2) * (1.0 + t))


def sample_dgp(spec: DGPSpec) -> Dataset:
    """Draw one dataset; exposures are clipped to [0.01, 0.99].

    The Beta shapes fall below one, so the raw exposure density blows up at
    the interval ends; clipping keeps positivity numerics stable.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed))
    X = rng.uniform(-0.5, 0.5, size=(spec.n, 4))
    lam = _shape_param(X)
    t = np.clip(rng.beta(lam, 1.0 - lam), _T_LO, _T_HI)
    y = _outcome_mean(X, t) + _outcome_sd(X, t) * rng.standard_normal(spec.n)
    return Dataset(X, t, y, DGP_DOMAIN)


def true_nuc_curve(t) -> np.ndarray:
    """Population dose-response curve sin(pi t) + sin(2 pi t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise InputError("curve is defined on [0, 1]")
    out = np.sin(np.pi * t) + np.sin(2.0 * np.pi * t)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# standard normal expectile


def normal_expectile(tau) -> np.ndarray:
    """Standard-normal expectile e(tau): tau E[(Z-e)_+] = (1-tau) E[(Z-e)_-].

    Solved by vectorized Newton iterations on
    g(e) = (2 tau - 1) phi(e) - e [tau + (1 - 2 tau) Phi(e)],
    whose derivative is -(tau + (1 - 2 tau) Phi(e)) < 0.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0) or np.any(tau >= 1.0):
        raise InputError("expectile level must lie strictly inside (0, 1)")
    e = ndtri(np.clip(tau, 1e-12, 1 - 1e-12))  # quantile start point
    shape = e.shape
    e = np.atleast_1d(e).astype(float)
    tflat = np.atleast_1d(tau).astype(float)
    for _ in range(80):
        phi = np.exp(-0.5 * e * e) / np.sqrt(2.0 * np.pi)
        Phi = ndtr(e)
        g = (2.0 * tflat - 1.0) * phi - e * (tflat + (1.0 - 2.0 * tflat) * Phi)
        dg = -(tflat + (1.0 - 2.0 * tflat) * Phi)
        step = g / dg
        e = e - step
        if np.max(np.abs(step)) < 1e-13:
            break
    return e.reshape(shape) if shape else float(e[0])


class _TabulatedExpectile:
    """Dense linear-interpolation table for e(tau), for hot loops."""

    def __init__(self, points: int = 20001):
        self.grid = np.linspace(1e-4, 1.0 - 1e-4, points)
        self.values = normal_expectile(self.grid)

    def __call__(self, tau):
        return np.interp(tau, self.grid, self.values)


# ---------------------------------------------------------------------------
# oracle nuisance surfaces


class TruncatedBetaDensity:
    """Exact conditional exposure density on the clipped interval."""

    def __init__(self, floor: float):
        self.floor = floor
        self.bin_edges = None

    def _params(self, X):
        lam = _shape_param(np.atleast_2d(X))
        return lam, 1.0 - lam

    def _norm(self, a, b):
        return betainc(a, b, _T_HI) - betainc(a, b, _T_LO)

    def _pdf(self, t, a, b):
        log_pdf = (a - 1.0) * np.log(t) + (b - 1.0) * np.log1p(-t) - betaln(a, b)
        return np.exp(log_pdf)

    def at(self, t, X) -> np.ndarray:
        a, b = self._params(X)
        t = np.clip(np.asarray(t, dtype=float), _T_LO, _T_HI)
        return np.maximum(self._pdf(t, a, b) / self._norm(a, b), self.floor)

    def grid(self, t_nodes, X) -> np.ndarray:
        a, b = self._params(X)
        t_nodes = np.clip(np.asarray(t_nodes, dtype=float), _T_LO, _T_HI)
        pdf = self._pdf(t_nodes[None, :], a[:, None], b[:, None])
        return np.maximum(pdf / self._norm(a, b)[:, None], self.floor)


class _NormalSurfaceBase:
    def __init__(self, sign: float):
        self.sign = sign

    def _mu_sd(self, X, t):
        X = np.atleast_2d(X)
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        return self.sign * _outcome_mean(X, t), _outcome_sd(X, t)

    def prepare_rows(self, X):
        X = np.atleast_2d(X)
        return (self.sign * (X @ _MEAN_COEF), np.sqrt(1.0 + X[:, 3] ** 2))

    def _cross_mu_sd(self, prepared, t_vals):
        shift, sd4 = prepared
        t_vals = np.asarray(t_vals, dtype=float)
        trig = np.sin(np.pi * t_vals) + np.sin(2.0 * np.pi * t_vals)
        mu = shift[None, :] + self.sign * trig[:, None]
        sd = sd4[None, :] * np.sqrt(1.0 + t_vals)[:, None]
        return mu, sd


class AnalyticExpectileSurface(_NormalSurfaceBase):
    def __init__(self, sign=1.0, table: _TabulatedExpectile | None = None):
        super().__init__(sign)
        self.table = table
        self.last_snap_distance = 0.0  # oracle evaluates tau exactly

    def _e(self, tau):
        if self.table is not None:
            return self.table(tau)
        return normal_expectile(tau)

    def eval(self, X, t, tau):
        mu, sd = self._mu_sd(X, t)
        e = self._e(np.asarray(tau, dtype=float))
        if e.ndim == 2:
            return mu[:, None] + sd[:, None] * e
        return mu + sd * e

    def cross_eval(self, prepared, t_vals, tau):
        mu, sd = self._cross_mu_sd(prepared, t_vals)
        return mu + sd * self._e(np.asarray(tau, dtype=float))

    def profile(self, X, t, tau_grid=None):
        grid = np.linspace(0.02, 0.98, 41) if tau_grid is None else np.asarray(tau_grid)
        return self.eval(X, t, np.broadcast_to(grid, (np.atleast_2d(X).shape[0], grid.size)))


class AnalyticQuantileSurface(_NormalSurfaceBase):
    def __init__(self, sign=1.0):
        super().__init__(sign)
        self.last_snap_distance = 0.0

    def eval(self, X, t, tau):
        mu, sd = self._mu_sd(X, t)
        z = ndtri(np.asarray(tau, dtype=float))
        if z.ndim == 2:
            return mu[:, None] + sd[:, None] * z
        return mu + sd * z

    def cross_eval(self, prepared, t_vals, tau):
        mu, sd = self._cross_mu_sd(prepared, t_vals)
        return mu + sd * ndtri(np.asarray(tau, dtype=float))


class AnalyticCvarSurface(_NormalSurfaceBase):
    """Normal tail mean above the tau-quantile: mu + sd phi(z_tau)/(1-tau)."""

    def _hazard(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau >= 1.0):
            raise InputError("cvar undefined at tau = 1")
        z = ndtri(tau)
        return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi) / (1.0 - tau)

    def eval(self, X, t, tau):
        mu, sd = self._mu_sd(X, t)
        h = self._hazard(tau)
        if h.ndim == 2:
            return mu[:, None] + sd[:, None] * h
        return mu + sd * h

    def cross_eval(self, prepared, t_vals, tau):
        mu, sd = self._cross_mu_sd(prepared, t_vals)
        return mu + sd * self._hazard(tau)


class AnalyticMeanSurface(_NormalSurfaceBase):
    def eval(self, X, t):
        mu, _ = self._mu_sd(X, t)
        return mu

    def cross_eval(self, prepared, t_vals):
        mu, _ = self._cross_mu_sd(prepared, t_vals)
        return mu


class AnalyticTailCdf(_NormalSurfaceBase):
    def eval(self, X, t, y):
        mu, sd = self._mu_sd(X, t)
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            return ndtr((y - mu[:, None]) / sd[:, None])
        return ndtr((y - mu) / sd)


_EXPECTILE_TABLE = None


def analytic_nuisances(
    config: RunConfig | None = None,
    negated: bool = False,
    fast_expectile: bool = True,
) -> NuisanceBundle:
    """Oracle bundle for the synthetic process.

    With `fast_expectile` the normal expectile uses a dense interpolation
    table (absolute error below 1e-8); otherwise every query runs Newton to
    machine precision.
    """
    global _EXPECTILE_TABLE
    floor = (config.floor_for(DGP_DOMAIN) if config is not None else 0.05 / DGP_DOMAIN.width)
    sign = -1.0 if negated else 1.0
    table = None
    if fast_expectile:
        if _EXPECTILE_TABLE is None:
            _EXPECTILE_TABLE = _TabulatedExpectile()
        table = _EXPECTILE_TABLE
    return NuisanceBundle(
        model="analytic",
        density=TruncatedBetaDensity(floor),
        expectile_surface=AnalyticExpectileSurface(sign, table),
        tail_cdf=AnalyticTailCdf(sign),
        quantile_surface=AnalyticQuantileSurface(sign),
        mean_surface=AnalyticMeanSurface(sign),
        cvar_surface=AnalyticCvarSurface(sign),
        analytic=True,
    )


def analytic_bundle_factory(fast_expectile: bool = True):
    """Bundle factory for the estimation pipeline; ignores the I3 data."""

    def factory(ds_I3, config, negated):
        return analytic_nuisances(config, negated=negated, fast_expectile=fast_expectile)

    return factory


# ---------------------------------------------------------------------------
# experiment harness

DEFAULT_GRID = np.linspace(0.1, 0.9, 9)

_CURVE_KINDS = (
    "nuc",
    "rosenbaum_lower",
    "rosenbaum_upper",
    "marginal_lower",
    "marginal_upper",
)

_DEFAULT_GAMMA = {"family": "exp_abs_diff", "params": [float(np.log(25.0))]}
_DEFAULT_LAMBDA = {"family": "exp_abs_diff", "params": [float(np.log(5.0))]}


@dataclass
class ExperimentReport:
    grid: np.ndarray
    reps: int
    n: int
    estimates: dict          # kind -> (reps, grid) array
    ses: dict                # kind -> (reps, grid) array
    mean_estimate: dict      # kind -> (grid,)
    mc_sd: dict
    mean_se: dict
    nuc_coverage: np.ndarray  # per grid point, CI coverage of the true curve
    bracket_rate: dict       # model -> share of reps bracketing at all points
    truth: np.ndarray
    runtime_seconds: float
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "grid": self.grid.tolist(),
            "reps": self.reps,
            "n": self.n,
            "truth": self.truth.tolist(),
            "mean_estimate": {k: v.tolist() for k, v in self.mean_estimate.items()},
            "mc_sd": {k: v.tolist() for k, v in self.mc_sd.items()},
            "mean_se": {k: v.tolist() for k, v in self.mean_se.items()},
            "nuc_coverage": self.nuc_coverage.tolist(),
            "bracket_rate": self.bracket_rate,
            "runtime_seconds": self.runtime_seconds,
            "config": self.config,
        }
        return json.dumps(payload, indent=2)

    def write_curves_csv(self, path) -> None:
        """Long format: one row per (rep, grid point, model family)."""
        def _row(*vals):
            return ",".join(repr(float(v)) for v in vals)

        with open(path, "w", newline="") as fh:
            fh.write("rep,t,model,estimate,se,lo,hi\n")
            for r in range(self.reps):
                for gi, t in enumerate(self.grid):
                    est = self.estimates["nuc"][r, gi]
                    se = self.ses["nuc"][r, gi]
                    fh.write(f"{r},{_row(t)},nuc,{_row(est, se, est, est)}\n")
                    for model in ("rosenbaum", "marginal"):
                        lo = self.estimates[f"{model}_lower"][r, gi]
                        hi = self.estimates[f"{model}_upper"][r, gi]
                        se_m = 0.5 * (
                            self.ses[f"{model}_lower"][r, gi]
                            + self.ses[f"{model}_upper"][r, gi]
                        )
                        mid = 0.5 * (lo + hi)
                        fh.write(f"{r},{_row(t)},{model},{_row(mid, se_m, lo, hi)}\n")


def _curve_config(config: RunConfig, model: str, side: str, sensitivity: dict, seed: int) -> RunConfig:
    return RunConfig(
        model=model,
        side=side,
        sensitivity=sensitivity,
        basis=config.basis,
        quadrature_nodes=config.quadrature_nodes,
        density_floor=config.density_floor,
        seed=seed,
        alpha=config.alpha,
        domain=DGP_DOMAIN,
        K=config.K,
        cross_fit=config.cross_fit,
        nested_fit=config.nested_fit,
        learner=config.learner,
    )


def run_experiment(
    reps: int,
    n: int,
    config: RunConfig,
    use_analytic_nuisances: bool = True,
    gamma_spec: dict | None = None,
    lambda_spec: dict | None = None,
    grid=None,
    curve_kinds=_CURVE_KINDS,
    threads: int = 1,
) -> ExperimentReport:
    """Replicate the full pipeline and aggregate bias/coverage/bracketing.

    Each replication draws a fresh dataset, runs the no-confounding baseline
    plus lower/upper bounds for both models, and evaluates everything on a
    fixed interior grid.  Replication r uses dataset seed (seed, r) and
    pipeline seed seed + r, so reports are reproducible.
    """
    if reps < 10:
        raise InputError(f"need at least 10 replications, got {reps}")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    gamma_spec = dict(_DEFAULT_GAMMA) if gamma_spec is None else gamma_spec
    lambda_spec = dict(_DEFAULT_LAMBDA) if lambda_spec is None else lambda_spec
    nuc_spec = {"family": "constant", "params": [1.0]}

    start = time.time()
    factory = analytic_bundle_factory() if use_analytic_nuisances else None

    kinds = tuple(curve_kinds)
    estimates = {k: np.empty((reps, grid.size)) for k in kinds}
    ses = {k: np.empty((reps, grid.size)) for k in kinds}
    z = _z_value(config.alpha)

    def _one_rep(r: int):
        ds = sample_dgp(DGPSpec(n=n, seed=_rep_entropy(config.seed, r)))
        out_est = {}
        out_se = {}
        plans = {}
        for kind in kinds:
            if kind == "nuc":
                model, side, spec = "rosenbaum", "lower", nuc_spec
            else:
                model, side = kind.split("_")
                spec = gamma_spec if model == "rosenbaum" else lambda_spec
            cfg = _curve_config(config, model, side, spec, config.seed + r)
            curve, _diag = estimate_bound_curve(ds, cfg, grid, bundle_factory=factory)
            out_est[kind] = curve.values
            out_se[kind] = curve.se
        return out_est, out_se

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one_rep, range(reps)))
    else:
        results = [_one_rep(r) for r in range(reps)]
    for r, (out_est, out_se) in enumerate(results):
        for k in kinds:
            estimates[k][r] = out_est[k]
            ses[k][r] = out_se[k]

    truth = true_nuc_curve(grid)
    mean_estimate = {k: estimates[k].mean(axis=0) for k in kinds}
    mc_sd = {k: estimates[k].std(axis=0, ddof=1) for k in kinds}
    mean_se = {k: ses[k].mean(axis=0) for k in kinds}

    nuc_lo = estimates["nuc"] - z * ses["nuc"]
    nuc_hi = estimates["nuc"] + z * ses["nuc"]
    nuc_coverage = ((nuc_lo <= truth) & (truth <= nuc_hi)).mean(axis=0)

    bracket_rate = {}
    for model in ("rosenbaum", "marginal"):
        lo_k, hi_k = f"{model}_lower", f"{model}_upper"
        if lo_k in estimates and hi_k in estimates:
            ok = (estimates[lo_k] <= truth) & (truth <= estimates[hi_k])
            bracket_rate[model] = float(ok.all(axis=1).mean())

    return ExperimentReport(
        grid=grid,
        reps=reps,
        n=n,
        estimates=estimates,
        ses=ses,
        mean_estimate=mean_estimate,
        mc_sd=mc_sd,
        mean_se=mean_se,
        nuc_coverage=nuc_coverage,
        bracket_rate=bracket_rate,
        truth=truth,
        runtime_seconds=time.time() - start,
        config={
            "seed": config.seed,
            "basis": {"kind": config.basis.kind, "J": config.basis.J},
            "cross_fit": config.cross_fit,
            "K": config.K,
            "quadrature_nodes": config.quadrature_nodes,
            "analytic_nuisances": use_analytic_nuisances,
            "gamma": gamma_spec,
            "lambda": lambda_spec,
        },
    )


def _rep_entropy(seed: int, r: int) -> int:
    # Stable per-replication dataset seed, independent of thread scheduling.
    return int(np.random.SeedSequence(entropy=(seed, r)).generate_state(1)[0])


def _z_value(alpha: float) -> float:
    return float(ndtri(1.0 - alpha / 2.0))
