"""Exception hierarchy shared by all modules."""


class RelaxALSError(Exception):
    """Base class for every error raised by this package."""


# factor / sweep
class SingularGauge(RelaxALSError, ValueError):
    pass


class RankCollapse(RelaxALSError, ArithmeticError):
    pass


class NonFinite(RelaxALSError, ArithmeticError):
    pass


# objectives
class SubproblemSingular(RelaxALSError, ArithmeticError):
    """A block subproblem has a singular normal matrix.

    ``index`` names the first deficient row (or column) when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TooManySamples(RelaxALSError, ValueError):
    pass


class ZeroData(RelaxALSError, ValueError):
    pass


class IllConditionedShift(RelaxALSError, ArithmeticError):
    pass


class FrameNotOrthonormal(RelaxALSError, ValueError):
    pass


class ZeroProjectedB(RelaxALSError, ValueError):
    pass


# shift
class DomainError(RelaxALSError, ValueError):
    pass


class InsufficientTrace(RelaxALSError, LookupError):
    pass


class NonPositiveError(RelaxALSError, ValueError):
    pass


# spectral oracle
class Asymmetry(RelaxALSError, ArithmeticError):
    pass


class SingularN(RelaxALSError, ArithmeticError):
    pass


class DegenerateSplitting(RelaxALSError, ArithmeticError):
    pass


class AllUnitEigenvalues(RelaxALSError, ArithmeticError):
    pass


class UnmatchedEigenvalue(RelaxALSError, ArithmeticError):
    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class NoConvergence(RelaxALSError, RuntimeError):
    pass


# tensor train
class TooLarge(RelaxALSError, ValueError):
    pass


class NotOrthogonalized(RelaxALSError, ValueError):
    pass


class SolveFailure(RelaxALSError, ArithmeticError):
    pass


class ZeroLocalRhs(RelaxALSError, ValueError):
    pass


class NotPowerOfTwo(RelaxALSError, ValueError):
    pass
