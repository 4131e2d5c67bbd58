"""Exception and warning types shared across the package."""


class GplsiError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(GplsiError):
    """A parameter violates a documented precondition."""


class ZeroLengthDocument(GplsiError):
    """A document has length zero, so frequencies are undefined."""


class DimensionMismatch(GplsiError):
    """Shapes or declared sizes of inputs disagree."""


class ParseError(GplsiError):
    """A file could not be parsed.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int or None
        1-based line number at which parsing failed, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class TooLarge(GplsiError):
    """Input exceeds the size guard of a dense diagnostic computation."""


class MaxIterationsExceeded(GplsiError):
    """An iterative solver hit its iteration cap before converging."""


class NumericalFailure(GplsiError):
    """A factorization or linear solve failed."""


class SingularH(GplsiError):
    """The vertex matrix H is numerically singular."""


class DegenerateGeometry(GplsiError):
    """Vertex hunting ran out of informative directions before K picks."""


class NotOrthonormal(GplsiError):
    """A matrix expected to have orthonormal columns does not."""


class ZeroVariance(GplsiError):
    """A spatial statistic is undefined because the input is constant."""


class RankDeficientWarning(UserWarning):
    """Fewer informative directions than requested; output padded."""
