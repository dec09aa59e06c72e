"""Exception hierarchy shared across the package.

Every error raised on a contract violation derives from DoseboundError so
callers (notably the CLI) can map failures onto exit codes without matching
on message strings.
"""


class DoseboundError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DoseboundError):
    """Invalid run configuration, fold request, or sensitivity family spec."""


class InputError(DoseboundError):
    """Malformed or out-of-contract data handed to an operation."""


class FitError(DoseboundError):
    """A nuisance or second-stage fit could not be completed."""


class NumericError(DoseboundError):
    """A numeric guard tripped (nonpositive generator, density under floor, ...)."""


class VerificationError(DoseboundError):
    """An oracle cross-check found a violation; carries the counterexample."""

    def __init__(self, message, counterexample=None):
        super().__init__(message)
        self.counterexample = counterexample
