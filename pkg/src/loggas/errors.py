"""Exception types shared across the package."""


class LogGasError(Exception):
    """Base class for all loggas errors."""


class InadmissiblePotentialError(LogGasError):
    """The potential violates the growth condition V(x) > (2+alpha) log(1+|x|)."""


class UnsupportedPotentialError(LogGasError):
    """The potential is outside the supported family (e.g. V'' unbounded below)."""


class NoOneCutSolutionError(LogGasError):
    """The support endpoint solver did not converge."""


class NotOneCutError(LogGasError):
    """The candidate equilibrium density goes negative: no one-cut solution."""


class RegularityViolationError(LogGasError):
    """The analytic factor r is not positive on the widened support interval."""

    def __init__(self, message, point=None, value=None):
        super().__init__(message)
        self.point = point
        self.value = value


class BranchCutError(LogGasError):
    """Evaluation requested on the branch cut [A, B] of the Stieltjes transform."""


class SingularConfigurationError(LogGasError):
    """A particle configuration has coincident or non-finite points."""


class StuckChainError(LogGasError):
    """A Markov chain accepted no proposal over its patience window."""


class EmptyWindowError(LogGasError):
    """A gap-collection window contained no sample points."""

    def __init__(self, message, expected_count=None):
        super().__init__(message)
        self.expected_count = expected_count


class StoreError(LogGasError):
    """A sample store is empty, malformed, or inconsistent with its metadata."""


class ConfigError(LogGasError):
    """An experiment configuration failed schema validation."""
