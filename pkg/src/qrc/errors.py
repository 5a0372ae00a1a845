"""Exception hierarchy shared by the solver, the discretizations and the CLI."""


class QRError(Exception):
    """Base class for every error raised by :mod:`qrc`."""


class DimensionMismatch(QRError, ValueError):
    pass


class IndexOutOfRange(QRError, IndexError):
    pass


class NotPositiveDefinite(QRError, ArithmeticError):
    """A pivot of an LDL^T factorization was not strictly positive.

    For ``S + eps*B`` this means the coercivity assumption on the pair of
    forms fails for the discretization at hand.
    """

    def __init__(self, pivot_index, pivot=None):
        self.pivot_index = int(pivot_index)
        self.pivot = pivot
        msg = f"non-positive pivot at index {self.pivot_index}"
        if pivot is not None:
            msg += f" (D = {pivot:.3e})"
        super().__init__(msg)


class SingularMatrix(QRError, ArithmeticError):
    pass


class NegativeResidual(QRError, ArithmeticError):
    """The quadratic residual form went negative beyond roundoff.

    Usually the load vector and the data energy were not computed from the
    same data.
    """


class InvalidSystem(QRError, ValueError):
    pass


class DegenerateMesh(QRError, ValueError):
    pass


class ParseError(QRError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(QRError, ValueError):
    pass


class AllGuarded(QRError, ValueError):
    pass


class ZeroSignal(QRError, ValueError):
    pass


class ConfigError(QRError, ValueError):
    pass


class InverseCrime(ConfigError):
    """Synthesis and inversion were requested on the same mesh."""
