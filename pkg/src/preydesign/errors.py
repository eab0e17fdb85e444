"""Exception and warning types shared across the package."""


class PreyDesignError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PreyDesignError, ValueError):
    """An argument is outside its mathematical domain."""


class NumericalError(PreyDesignError, RuntimeError):
    """An iterative routine failed to converge or produced garbage."""


class DegenerateUpdateError(NumericalError):
    """Reweighting wiped out every particle at double precision.

    Carries a ``diagnostics`` dict (model id, observation, max log
    likelihood) so callers can report what went wrong.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateUpdateWarning(UserWarning):
    """A reweight collapsed the ESS to ~1; results downstream are suspect."""


class FitFailureError(NumericalError):
    """Posterior-mode search failed from every start point."""


class UnreliableEstimateError(NumericalError):
    """Too many Monte Carlo draws were discarded to trust the estimate."""
