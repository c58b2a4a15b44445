"""Exception types shared across the pipeline."""


class InputError(ValueError):
    """Raised when an operation's preconditions are violated."""


class ParseError(ValueError):
    """Raised on malformed on-disk data. Carries the offending location."""

    def __init__(self, message, path=None, line=None, offset=None):
        loc = str(path) if path is not None else "<unknown>"
        if line is not None:
            loc += f":{line}"
        if offset is not None:
            loc += f" (byte {offset})"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line
        self.offset = offset


class PipelineError(RuntimeError):
    """Raised when a pipeline stage cannot produce output (e.g. no instances)."""
