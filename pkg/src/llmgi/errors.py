"""Exception hierarchy shared by every module."""


class GIError(Exception):
    """Base class for engine errors."""


# patch algebra
class EncodingError(GIError):
    pass


class BaseMismatch(GIError):
    pass


class IndexOutOfBounds(GIError, IndexError):
    pass


class OverlappingReplace(GIError):
    pass


# mutation
class EmptyUnit(GIError):
    pass


class TooFewSpans(GIError):
    pass


class FunctionNotFound(GIError):
    pass


class EmptyCompletion(GIError):
    pass


class UnparsableBody(GIError):
    pass


class ProviderError(GIError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (after {attempts} attempt{'s' if attempts != 1 else ''})")
        self.attempts = attempts


# harness
class ToolchainMissing(GIError):
    pass


class SandboxError(GIError):
    pass


class TimeoutExceeded(GIError):
    pass


class UnsupportedPlatform(GIError):
    pass


# engine / config
class ConfigError(GIError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class UnevaluatedCandidate(GIError):
    pass


class WorkloadFailed(GIError):
    pass
