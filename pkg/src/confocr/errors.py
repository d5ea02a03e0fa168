"""Exception hierarchy shared across the toolkit."""


class ConfocrError(Exception):
    """Base class for all toolkit errors."""


class InputError(ConfocrError):
    """Invalid user input: bad files, bad flags, out-of-range values.

    The CLI maps this to exit code 2.
    """


class FormatError(InputError):
    """A file could not be parsed. Carries the offending path and location."""

    def __init__(self, path, detail, location=None):
        self.path = str(path)
        self.detail = detail
        self.location = location
        where = f"{self.path}" if location is None else f"{self.path}:{location}"
        super().__init__(f"{where}: {detail}")


class MetricUndefinedError(ConfocrError):
    """A metric has no defined value on this input (e.g. CER with zero GT characters)."""
