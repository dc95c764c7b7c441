"""Exception hierarchy.

Every error deriving from :class:`RingPlsError` describes a problem with the
caller's inputs (data, config, files); the CLI maps these to exit code 2.
"""


class RingPlsError(Exception):
    """Base class for all user-facing errors raised by the package."""


# map ingestion
class PaletteError(RingPlsError, ValueError):
    pass


class DiscOutOfBounds(RingPlsError, ValueError):
    pass


class DimensionMismatch(RingPlsError, ValueError):
    pass


class EmptyRing(RingPlsError, ValueError):
    pass


class WrongRingCount(RingPlsError, ValueError):
    pass


class FilenameError(RingPlsError, ValueError):
    pass


# pollution ingestion
class SchemaError(RingPlsError, ValueError):
    pass


class ParseError(RingPlsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKey(RingPlsError, ValueError):
    pass


class EmptyJoin(RingPlsError, ValueError):
    pass


# plsr
class ZeroVariance(RingPlsError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class ConvergenceFailure(RingPlsError, ArithmeticError):
    def __init__(self, component, iterations):
        self.component = component
        self.iterations = iterations
        super().__init__(
            f"NIPALS did not converge for component {component} after {iterations} iterations"
        )


class RankDeficient(RingPlsError, ArithmeticError):
    def __init__(self, component):
        self.component = component
        super().__init__(
            f"residual matrix is numerically zero before component {component} could be extracted"
        )


# model selection
class TooFewRows(RingPlsError, ValueError):
    pass


class FoldTooSmall(RingPlsError, ValueError):
    pass


class ShapeMismatch(RingPlsError, ValueError):
    pass


class EmptyTest(RingPlsError, ValueError):
    pass


# diagnostics
class ConstantColumn(RingPlsError, ValueError):
    pass


class DegenerateModel(RingPlsError, ValueError):
    pass


class ComponentOutOfRange(RingPlsError, IndexError):
    pass


# cli
class ConfigError(RingPlsError):
    pass


class NoInputs(RingPlsError):
    pass


class EmptyValidation(RingPlsError):
    pass
