"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class NegtagError(Exception):
    exit_code = 1


class UsageError(NegtagError):
    """Bad call or bad command-line/config input."""

    exit_code = 1


class ConfigError(UsageError):
    """Inconsistent model or run configuration (shapes, rates, dims)."""


class DataError(NegtagError):
    """Malformed corpus, lexicon, or checkpoint content."""

    exit_code = 2

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:" + (f"{line}: " if line is not None else " ")
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DivergenceError(NegtagError):
    """Non-finite loss or gradient during training."""

    exit_code = 3
