"""Exception types raised across the package."""


class AllocRLError(Exception):
    """Base class for every error raised by alloc_rl."""


class ValidationError(AllocRLError, ValueError):
    """Bad input or configuration detected before any work is done."""


# market data
class ParseError(ValidationError):
    pass


class NonPositivePrice(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class DegenerateSplit(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class NetworkError(AllocRLError):
    pass


class ProviderFormatError(AllocRLError):
    pass


class EmptyUniverse(ValidationError):
    pass


# environment
class DataTooShort(ValidationError):
    pass


class NotOnSimplex(ValidationError):
    pass


class DegenerateReturn(AllocRLError, ArithmeticError):
    pass


class EpisodeFinished(AllocRLError):
    pass


# tensor core
class ShapeMismatch(AllocRLError, ValueError):
    pass


class NotScalar(AllocRLError, ValueError):
    pass


class NoGraph(AllocRLError, RuntimeError):
    pass


# baselines
class Infeasible(AllocRLError):
    pass


class SolverDiverged(AllocRLError):
    pass


# agents
class BufferTooSmall(AllocRLError):
    pass


class EmptyBatch(AllocRLError):
    pass


class LineSearchFailed(AllocRLError):
    pass


# backtest
class DomainError(AllocRLError, ValueError):
    pass


class ZeroVolatility(AllocRLError, ArithmeticError):
    pass


class EmptyRuns(AllocRLError, ValueError):
    pass
