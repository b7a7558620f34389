"""Exception hierarchy shared by every kslat module."""


class KslatError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(KslatError, ValueError):
    pass


class DimensionTooLarge(KslatError, ValueError):
    pass


class NotSelfAdjoint(KslatError, ValueError):
    pass


class NotAProjection(KslatError, ValueError):
    pass


class NumericalDegeneracy(KslatError, ArithmeticError):
    """Eigenvalue clustering could not be decided at the configured gap."""


class DomainGap(KslatError, KeyError):
    """A Borel value-map does not cover some eigenvalue it was applied to."""


class ParseError(KslatError, ValueError):
    pass


class ZeroVector(KslatError, ValueError):
    pass


class MissingValue(KslatError, KeyError):
    pass


class IncompleteAssignment(KslatError, KeyError):
    pass


class QuasiStateFailure(KslatError, ValueError):
    pass


class HashMismatch(KslatError, ValueError):
    pass


class CorruptCertificate(KslatError, ValueError):
    pass


class IndivisibleRank(KslatError, ValueError):
    pass


class NotPositive(KslatError, ValueError):
    pass


class NotNormalized(KslatError, ValueError):
    pass


class EmptyAlgebra(KslatError, ValueError):
    pass


class ClosureFailure(KslatError, RuntimeError):
    pass


class BadBlockSpec(KslatError, ValueError):
    pass


class BadDensitySpec(KslatError, ValueError):
    pass
