"""Exception hierarchy shared across the package."""


class PCLTSError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(PCLTSError, ValueError):
    """Shapes or lengths of inputs do not fit together."""


class ConfigurationError(PCLTSError, ValueError):
    """A configuration value violates its documented invariant."""


class TrainingError(PCLTSError, ArithmeticError):
    """Training produced a non-finite loss or parameters.

    ``step`` is the iteration index at which the problem was detected, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PipelineError(PCLTSError):
    """The robust pipeline cannot continue (e.g. too few rows survive cleaning)."""


class ParseError(PCLTSError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
