"""Admissible sensitivity functions on exposure pairs.

Each function maps an exposure pair (t, t') to a bound >= 1 that is symmetric
with a unit diagonal.  Built-ins are generated from a scalar log-generator
S(t): the bound is exp(|S(t) - S(t')|), which automatically satisfies the
multiplicative triangle inequality across exposure triples.  The constant
family is the one non-generator member; it still satisfies every class
invariant because c <= c * c for c >= 1.
"""

from __future__ import annotations

import math

import numpy as np

from .core_data import ExposureDomain
from .errors import ConfigurationError, NumericError

FAMILIES = (
    "exp_abs_diff",
    "exp_abs_sq_diff",
    "exp_log_ratio",
    "beta_odds",
    "step",
    "constant",
)


class SensitivityFunction:
    """Symmetric, unit-diagonal bound on exposure pairs.

    `log_generator` is S(t) with eval(t, t') = exp(|S(t) - S(t')|); it is
    None only for the constant family, where the off-diagonal value is fixed.
    """

    def __init__(self, log_generator=None, constant=None, spec=None):
        if (log_generator is None) == (constant is None):
            raise ConfigurationError("provide exactly one of log_generator / constant")
        if constant is not None and constant < 1.0:
            raise ConfigurationError("constant sensitivity value must be >= 1")
        self.log_generator = log_generator
        self.constant = constant
        self.spec = spec

    def eval(self, t, t_prime):
        """Bound value at (t, t'); broadcasts over array arguments."""
        t = np.asarray(t, dtype=float)
        tp = np.asarray(t_prime, dtype=float)
        if self.constant is not None:
            out = np.where(t == tp, 1.0, self.constant)
            return float(out) if out.ndim == 0 else out
        s1 = np.asarray(self.log_generator(t), dtype=float)
        s2 = np.asarray(self.log_generator(tp), dtype=float)
        if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
            raise NumericError("log-generator produced a non-finite value")
        out = np.exp(np.abs(s1 - s2))
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    @property
    def is_trivial(self) -> bool:
        """True when the function is identically one (no confounding)."""
        return self.constant is not None and self.constant == 1.0


def make_family(family_id: str, params, domain: ExposureDomain) -> SensitivityFunction:
    """Construct a named parametric family on the given domain.

    Families and their bounds:
      exp_abs_diff      exp(g |t - t'|)
      exp_abs_sq_diff   exp(g/2 |t^2 - t'^2|)
      exp_log_ratio     exp(g |log t - log t'|), domain.lo > 0
      beta_odds         [ (t v t')(1 - t ^ t') / ((t ^ t')(1 - t v t')) ]^g,
                        domain inside (0, 1)
      step              exp(2 g 1[(t - t0)(t' - t0) < 0]), params (g, t0)
      constant          c >= 1
    """
    params = [float(v) for v in np.atleast_1d(params)]

    def _need(k):
        if len(params) != k:
            raise ConfigurationError(
                f"family {family_id!r} takes {k} parameter(s), got {len(params)}"
            )

    if family_id == "exp_abs_diff":
        _need(1)
        g = params[0]
        if g <= 0:
            raise ConfigurationError("rate must be positive")
        return SensitivityFunction(
            log_generator=lambda t: g * np.asarray(t, dtype=float),
            spec={"family": family_id, "params": params},
        )
    if family_id == "exp_abs_sq_diff":
        _need(1)
        g = params[0]
        if g <= 0:
            raise ConfigurationError("rate must be positive")
        return SensitivityFunction(
            log_generator=lambda t: 0.5 * g * np.square(np.asarray(t, dtype=float)),
            spec={"family": family_id, "params": params},
        )
    if family_id == "exp_log_ratio":
        _need(1)
        g = params[0]
        if g <= 0:
            raise ConfigurationError("rate must be positive")
        if domain.lo <= 0:
            raise ConfigurationError("exp_log_ratio requires a strictly positive domain")
        return SensitivityFunction(
            log_generator=lambda t: g * np.log(np.asarray(t, dtype=float)),
            spec={"family": family_id, "params": params},
        )
    if family_id == "beta_odds":
        _need(1)
        g = params[0]
        if g <= 0:
            raise ConfigurationError("rate must be positive")
        if not (0.0 < domain.lo and domain.hi < 1.0):
            raise ConfigurationError("beta_odds requires the domain inside (0, 1)")

        def _logit(t):
            t = np.asarray(t, dtype=float)
            return g * (np.log(t) - np.log1p(-t))

        return SensitivityFunction(
            log_generator=_logit, spec={"family": family_id, "params": params}
        )
    if family_id == "step":
        _need(2)
        g, t0 = params
        if g <= 0:
            raise ConfigurationError("rate must be positive")
        # Generator form: a two-level step at t0; pairs strictly straddling
        # t0 get exp(2g), everything else 1.
        return SensitivityFunction(
            log_generator=lambda t: 2.0 * g * (np.asarray(t, dtype=float) > t0),
            spec={"family": family_id, "params": params},
        )
    if family_id == "constant":
        _need(1)
        c = params[0]
        if c < 1.0:
            raise ConfigurationError("constant value must be >= 1")
        return SensitivityFunction(constant=c, spec={"family": family_id, "params": params})
    raise ConfigurationError(f"unknown sensitivity family {family_id!r}")


def from_generator(upsilon) -> SensitivityFunction:
    """Wrap a strictly positive generator function Y(t).

    The bound is max(Y(t)/Y(t'), Y(t')/Y(t)); scaling Y by any positive
    constant leaves it unchanged.
    """

    def _log(t):
        v = np.asarray(upsilon(np.asarray(t, dtype=float)), dtype=float)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise NumericError("generator must be strictly positive and finite")
        return np.log(v)

    return SensitivityFunction(log_generator=_log, spec=None)


def sqrt_function(sf: SensitivityFunction) -> SensitivityFunction:
    """Pointwise square root, realized by halving the log scale."""
    if sf.constant is not None:
        spec = None
        if sf.spec is not None:
            spec = {"family": "constant", "params": [math.sqrt(sf.constant)]}
        return SensitivityFunction(constant=math.sqrt(sf.constant), spec=spec)
    inner = sf.log_generator
    return SensitivityFunction(log_generator=lambda t: 0.5 * np.asarray(inner(t)), spec=None)


def from_spec(spec: dict, domain: ExposureDomain) -> SensitivityFunction:
    """Build from the JSON form {"family": ..., "params": [...]}."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigurationError("sensitivity spec must be {'family': ..., 'params': [...]}")
    return make_family(spec["family"], spec.get("params", []), domain)
