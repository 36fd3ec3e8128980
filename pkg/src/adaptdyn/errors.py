"""Exception hierarchy."""


class AdaptdynError(Exception):
    """Base class for all package errors."""


class TraitDomainError(AdaptdynError, ValueError):
    """A trait lies outside the trait space or violates a precondition."""


class AssumptionViolation(AdaptdynError):
    """A model assumption (positivity, boundedness, domination) fails."""


class DegenerateError(AdaptdynError, ArithmeticError):
    """A linear system or denominator is singular to tolerance."""


class ContractError(AdaptdynError, ValueError):
    """Inputs have inconsistent shapes or duplicate traits."""


class AmbiguousSignError(AdaptdynError, ArithmeticError):
    """A fitness value is too close to zero for its sign to be trusted."""


class UndeterminedError(AdaptdynError):
    """The requested verdict is undetermined at a degenerate singularity."""


class SamplingError(AdaptdynError, RuntimeError):
    """Rejection sampling exhausted its retry budget."""


class DominatingBoundError(AdaptdynError, RuntimeError):
    """A thinning acceptance ratio exceeded one."""


class NumericalError(AdaptdynError, RuntimeError):
    """A numerical routine failed; carries diagnostics in ``args``."""
