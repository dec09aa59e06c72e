"""Bounds on continuous-exposure dose-response curves under density-ratio
sensitivity models, with influence-function pseudo-outcomes, cross-fitted
sieve regression, and a brute-force verification oracle."""

from .core_data import (
    BasisSpec,
    Dataset,
    ExposureDomain,
    FoldPlan,
    LearnerSpec,
    RunConfig,
    make_fold_plan,
    negate_outcomes,
)
from .errors import (
    ConfigurationError,
    DoseboundError,
    FitError,
    InputError,
    NumericError,
    VerificationError,
)
from .identification import (
    ConditionalBound,
    WeightedSample,
    marginal_bound,
    marginal_bound_cvar_form,
    solve_expectile,
    solve_quantile,
)
from .oracle_bounds import (
    DiscreteDist,
    oracle_cross_check,
    oracle_marginal,
    oracle_rosenbaum,
)
from .sensitivity import SensitivityFunction, from_generator, make_family, sqrt_function

__version__ = "0.1.0"
