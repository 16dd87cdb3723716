"""Exception hierarchy shared by all seqcrf modules."""


class SeqCRFError(Exception):
    """Base class for every error raised by seqcrf."""


class InvalidInputError(SeqCRFError, ValueError):
    """Inputs have wrong shape, non-finite entries or out-of-range values."""


class InvalidConfigError(SeqCRFError, ValueError):
    """A configuration value violates its constraints (e.g. an even window)."""


class ConvergenceError(SeqCRFError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), frame=None):
        super().__init__(message)
        self.residual = residual
        self.frame = frame


class DivergenceError(SeqCRFError, FloatingPointError):
    """Training produced non-finite parameters."""


class DegenerateSupportError(SeqCRFError, ArithmeticError):
    """The active-set Gram matrix is empty or too ill-conditioned to invert."""


class ParseError(SeqCRFError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ManifestError(SeqCRFError, ValueError):
    """A split manifest is malformed or cannot serve the requested scheme."""
