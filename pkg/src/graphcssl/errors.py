"""Exception categories shared across the package."""


class GraphCSSLError(Exception):
    """Base class for every error raised by graphcssl."""

    exit_code = 1


class InvalidArgument(GraphCSSLError, ValueError):
    exit_code = 2


class ShapeError(GraphCSSLError, ValueError):
    exit_code = 3


class NotApplicable(GraphCSSLError, ValueError):
    """An alteration operation was requested on operands it cannot act on."""

    exit_code = 4


class AugmentationExhausted(GraphCSSLError):
    """No whitelisted alteration operation applies to the current graph."""

    exit_code = 5


class FormatError(GraphCSSLError, ValueError):
    exit_code = 6

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(GraphCSSLError, ValueError):
    exit_code = 7


class DataNotFound(GraphCSSLError, FileNotFoundError):
    """A dataset file or directory is missing."""

    exit_code = 8
