"""Exception hierarchy.

Validation problems (bad inputs, violated preconditions) derive from
:class:`ValidationError`; failures of a numerical procedure on valid input
derive from :class:`NumericalError`.  The CLI maps the two families to
distinct exit codes.
"""


class PerturbMCError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(PerturbMCError, ValueError):
    pass


class NumericalError(PerturbMCError, ArithmeticError):
    pass


# markov core
class NonSquare(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class RowSumViolation(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class SingularSystem(NumericalError):
    pass


# controlled model
class DomainTooSmall(ValidationError):
    pass


class NonGeometricCovariance(NumericalError):
    pass


class InvalidZetaDomain(ValidationError):
    pass


# truncated sums
class TruncationNotConverged(NumericalError):
    pass


class TailNotSummable(NumericalError):
    pass


class TailNotConverged(NumericalError):
    pass


class SingularResolvent(NumericalError):
    pass


# misc
class DimensionMismatch(ValidationError):
    pass


class LagTooLarge(ValidationError):
    pass


class SupportViolation(ValidationError):
    pass


class InvalidLoad(ValidationError):
    pass
