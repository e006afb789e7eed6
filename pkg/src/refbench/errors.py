"""Exception hierarchy shared across the harness."""


class RefbenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(RefbenchError):
    """Bad configuration: unknown profile, missing field, invalid parameter."""


class FormatError(RefbenchError):
    """A gold or prediction file line does not match its documented schema."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class TransportError(RefbenchError):
    """The remote service could not be reached or returned a retryable failure."""


class AuthError(RefbenchError):
    """The remote service rejected our credentials."""


class GrobidError(RefbenchError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(f"GROBID returned HTTP {status}" + (f": {message}" if message else ""))


class PdfRejected(RefbenchError):
    """Empty or unreadable PDF payload."""


class DimensionMismatch(RefbenchError):
    pass


class ReplayMiss(RefbenchError):
    """Replay mode was asked for a response that was never recorded."""

    def __init__(self, key):
        self.key = key
        super().__init__(f"no recorded response for key {key}")


class PayloadTooLarge(RefbenchError):
    def __init__(self, estimated_tokens, budget):
        self.estimated_tokens = estimated_tokens
        self.budget = budget
        super().__init__(
            f"prompt needs ~{estimated_tokens} tokens but only {budget} are available; "
            "use a segmenting strategy"
        )


class SizeExceeded(RefbenchError):
    pass
