"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller broke a precondition of an operation."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class ParseError(ValueError):
    """Malformed input file. Carries the path and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)


class SequencingError(RuntimeError):
    """Frames fed out of order to an online component."""


class DegenerateInputError(ValueError):
    """Input geometry for which the result is undefined."""


class FrameRangeError(IndexError):
    """Frame id outside the available range."""
