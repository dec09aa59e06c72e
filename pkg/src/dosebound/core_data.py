"""Observed-data containers, fold planning, and run configuration.

A Dataset holds (X, T, Y) rows with a declared exposure interval.  FoldPlan
assigns rows to K folds and enumerates role triples (evaluation I1,
aggregation I2, nuisance I3) for optional cross-fitting.  RunConfig is the
JSON-facing bag of knobs consumed by the estimation pipeline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class ExposureDomain:
    """Closed exposure interval [lo, hi], lo < hi, both finite."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ConfigurationError("exposure domain must be finite")
        if not self.lo < self.hi:
            raise ConfigurationError(
                f"exposure domain requires lo < hi, got [{self.lo}, {self.hi}]"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, t) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all((t >= self.lo) & (t <= self.hi)))


class Dataset:
    """Immutable (X, T, Y) sample with its exposure domain.

    X is (n, p), t and y are (n,).  All values must be finite and every
    exposure must lie inside the domain.
    """

    def __init__(self, X, t, y, domain: ExposureDomain):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = np.asarray(t, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != t.size or t.size != y.size:
            raise InputError(
                f"row mismatch: X has {X.shape[0]} rows, t {t.size}, y {y.size}"
            )
        if t.size == 0:
            raise InputError("dataset must contain at least one row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        if not domain.contains(t):
            raise InputError("exposure values fall outside the declared domain")
        for arr in (X, t, y):
            arr.setflags(write=False)
        self.X = X
        self.t = t
        self.y = y
        self.domain = domain

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.t[idx], self.y[idx], self.domain)

    @classmethod
    def from_csv(cls, path, domain: ExposureDomain) -> "Dataset":
        """Read rows from a CSV with header columns x1..xp,t,y."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            p = len(header) - 2
            expected = [f"x{i + 1}" for i in range(p)] + ["t", "y"]
            if p < 1 or header != expected:
                raise InputError(
                    f"{path}: header must be x1..xp,t,y, got {','.join(header)}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != p + 2:
                    raise InputError(f"{path}:{lineno}: expected {p + 2} fields")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise InputError(f"{path}: no data rows")
        arr = np.asarray(rows, dtype=float)
        return cls(arr[:, :p], arr[:, p], arr[:, p + 1], domain)

    def to_csv(self, path) -> None:
        header = [f"x{i + 1}" for i in range(self.p)] + ["t", "y"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                writer.writerow(
                    [repr(float(v)) for v in self.X[i]]
                    + [repr(float(self.t[i])), repr(float(self.y[i]))]
                )


def negate_outcomes(ds: Dataset) -> Dataset:
    """Flip the sign of every outcome; an involution used for upper bounds."""
    return Dataset(ds.X, ds.t, -ds.y, ds.domain)


@dataclass(frozen=True)
class RoleTriple:
    """Fold roles for one estimation pass.

    i1_folds feed the second-stage regression, i2_fold supplies the
    aggregation averages, i3_fold fits the nuisance surfaces.
    """

    i1_folds: tuple
    i2_fold: int
    i3_fold: int


@dataclass(frozen=True)
class FoldPlan:
    n: int
    K: int
    assignment: np.ndarray
    role_map: tuple

    def fold_indices(self, fold) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def triple_indices(self, triple: RoleTriple):
        """Row indices (i1, i2, i3) for one role triple."""
        i1 = np.flatnonzero(np.isin(self.assignment, triple.i1_folds))
        i2 = self.fold_indices(triple.i2_fold)
        i3 = self.fold_indices(triple.i3_fold)
        return i1, i2, i3


def make_fold_plan(n: int, K: int, seed: int, cross_fit: bool = False) -> FoldPlan:
    """Seeded uniform shuffle followed by round-robin fold assignment.

    With cross_fit the role map enumerates every ordered pair of distinct
    (i2, i3) folds, K*(K-1) triples; otherwise a single triple uses fold 1
    for aggregation, fold 2 for nuisances, and the rest for evaluation.
    """
    if K < 3:
        raise ConfigurationError(f"need K >= 3 folds, got {K}")
    if n < 10 * K:
        raise ConfigurationError(f"need at least 10*K = {10 * K} rows, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % K
    assignment.setflags(write=False)

    folds = list(range(K))
    if cross_fit:
        triples = []
        for i2 in folds:
            for i3 in folds:
                if i2 == i3:
                    continue
                i1 = tuple(f for f in folds if f not in (i2, i3))
                triples.append(RoleTriple(i1, i2, i3))
    else:
        i1 = tuple(f for f in folds if f not in (1, 2))
        triples = [RoleTriple(i1, 1, 2)]
    return FoldPlan(n=n, K=K, assignment=assignment, role_map=tuple(triples))


#: Hyperparameters for the built-in sieve learners.  `learner_id` names which
#: surface the spec is configuring; the remaining fields are shared knobs.
@dataclass(frozen=True)
class LearnerSpec:
    learner_id: str = "sieve_expectile"
    bins: int = 10
    deg_x: int = 2
    deg_t: int = 4
    ridge: float = 1e-4
    # The bin classifier overfits far faster than the ridge regressions, so
    # its covariate coefficients carry their own penalty (intercepts exempt).
    density_ridge: float = 0.03
    tau_lo: float = 0.02
    tau_hi: float = 0.98
    tau_points: int = 41
    y_grid_points: int = 25
    max_iter: int = 200
    tol: float = 1e-9

    _KNOWN = (
        "binned_density",
        "sieve_expectile",
        "sieve_quantile",
        "tail_regressor",
        "mean_regressor",
    )

    def __post_init__(self):
        if self.learner_id not in self._KNOWN:
            raise ConfigurationError(f"unknown learner_id {self.learner_id!r}")
        if self.bins < 4:
            raise ConfigurationError("density estimation needs at least 4 bins")
        if self.tau_points < 20 or not (0.0 < self.tau_lo < self.tau_hi < 1.0):
            raise ConfigurationError(
                "tau grid must have >= 20 points strictly inside (0, 1)"
            )

    def tau_grid(self) -> np.ndarray:
        return np.linspace(self.tau_lo, self.tau_hi, self.tau_points)


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "polynomial"
    J: int = 6

    def __post_init__(self):
        if self.kind not in ("polynomial", "legendre", "bspline", "fourier"):
            raise ConfigurationError(f"unknown basis kind {self.kind!r}")
        if self.J < 1:
            raise ConfigurationError("basis dimension J must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Run settings; serializes to/from JSON with matching field names."""

    model: str = "rosenbaum"
    side: str = "lower"
    sensitivity: dict = field(default_factory=lambda: {"family": "constant", "params": [1.0]})
    basis: BasisSpec = field(default_factory=BasisSpec)
    quadrature_nodes: int = 64
    density_floor: float | None = None
    seed: int = 0
    alpha: float = 0.05
    domain: ExposureDomain | None = None
    K: int = 3
    cross_fit: bool = False
    nested_fit: bool = False
    learner: LearnerSpec = field(default_factory=LearnerSpec)

    def __post_init__(self):
        if self.model not in ("rosenbaum", "marginal"):
            raise ConfigurationError(f"model must be rosenbaum or marginal, got {self.model!r}")
        if self.side not in ("lower", "upper"):
            raise ConfigurationError(f"side must be lower or upper, got {self.side!r}")
        if self.quadrature_nodes < 8:
            raise ConfigurationError("quadrature_nodes must be >= 8")
        if self.density_floor is not None and not self.density_floor > 0:
            raise ConfigurationError("density_floor must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")

    def floor_for(self, domain: ExposureDomain) -> float:
        # Default keeps the floored density a 5% share of a uniform density.
        if self.density_floor is not None:
            return self.density_floor
        return 0.05 / domain.width

    def to_json(self) -> str:
        d = asdict(self)
        d["basis"] = {"kind": self.basis.kind, "J": self.basis.J}
        d["learner"] = {
            k: v for k, v in asdict(self.learner).items()
        }
        d["domain"] = None if self.domain is None else {"lo": self.domain.lo, "hi": self.domain.hi}
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config JSON must be an object")
        kwargs = dict(raw)
        if "basis" in kwargs and kwargs["basis"] is not None:
            kwargs["basis"] = BasisSpec(**kwargs["basis"])
        if "learner" in kwargs and kwargs["learner"] is not None:
            kwargs["learner"] = LearnerSpec(**kwargs["learner"])
        if kwargs.get("domain") is not None:
            kwargs["domain"] = ExposureDomain(**kwargs["domain"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"unknown config field: {exc}") from None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())
