"""Exception types raised across the pipeline."""


class R2ScopeError(Exception):
    """Base class for all package errors."""


class MalformedHeader(R2ScopeError):
    pass


class TruncatedRecord(R2ScopeError):
    pass


class OutOfOrderInput(R2ScopeError):
    pass


class OverlappingRanges(R2ScopeError):
    pass


class MalformedRow(R2ScopeError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class StorageUnavailable(R2ScopeError):
    pass


class EmptyStore(R2ScopeError):
    pass


class DegenerateSeries(R2ScopeError):
    pass


class SpecInvalid(R2ScopeError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
