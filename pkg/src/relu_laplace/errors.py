"""Exception types raised across the package."""


class LaplaceError(Exception):
    """Base class for all errors raised by relu_laplace."""


class LinAlgFailure(LaplaceError):
    """Linear-algebra failures (CLI exit code 4)."""


class NotPositiveDefinite(LinAlgFailure, ValueError):
    pass


class NoConvergence(LinAlgFailure):
    pass


class AsymmetricMatrix(LinAlgFailure, ValueError):
    pass


class DimensionMismatch(LaplaceError, ValueError):
    pass


class DimensionTooLarge(LaplaceError, ValueError):
    pass


class Unstable(LaplaceError):
    """Activation pattern still changing at the end of a delta grid."""


class RegionBoundary(LaplaceError):
    """Input lies (numerically) on a linear-region facet."""


class Diverged(LaplaceError):
    pass


class NegativeVariance(LaplaceError, ValueError):
    pass


class RankDeficient(LaplaceError):
    pass


class BiasedNetwork(LaplaceError, ValueError):
    pass


class EmptyInput(LaplaceError, ValueError):
    pass


class LengthMismatch(LaplaceError, ValueError):
    pass


class BadMagic(LaplaceError, ValueError):
    pass


class TruncatedFile(LaplaceError, ValueError):
    pass


class CountMismatch(LaplaceError, ValueError):
    pass


class BadSize(LaplaceError, ValueError):
    pass


class ParseError(LaplaceError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ClassAbsent(LaplaceError, ValueError):
    pass


class NonPlanarInput(LaplaceError, ValueError):
    pass


class ConfigError(LaplaceError, ValueError):
    pass
