"""Exception types raised across the package."""


class WesbenchError(Exception):
    """Base class for all package errors."""


class NumericError(WesbenchError):
    """Base class for failures of a numerical procedure (CLI exit code 3)."""


class DimensionMismatch(WesbenchError, ValueError):
    pass


class ParticleMismatch(WesbenchError, ValueError):
    pass


class TooFewParticles(WesbenchError, ValueError):
    pass


class AllZeroWeights(NumericError, ValueError):
    pass


class EmptyEnsemble(WesbenchError, ValueError):
    pass


class EmptyPointSet(WesbenchError, ValueError):
    pass


class SupportMismatch(WesbenchError, ValueError):
    pass


class ZeroBandwidth(NumericError, ValueError):
    pass


class RankDeficient(NumericError):
    pass


class InsufficientFrames(NumericError, ValueError):
    pass


class TooFewFrames(NumericError, ValueError):
    pass


class LagTooLong(NumericError, ValueError):
    pass


class NoConnectedSet(NumericError):
    pass


class NotIrreducible(NumericError):
    pass


class DegenerateRange(WesbenchError, UserWarning):
    """Issued (as a warning) when a binning dimension collapses to one value."""


class ConfigError(WesbenchError, ValueError):
    """Invalid benchmark configuration; ``line`` points into the source file."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class FormatError(WesbenchError, ValueError):
    """Malformed trajectory or model file."""
