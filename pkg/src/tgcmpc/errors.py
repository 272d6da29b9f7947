class TgcmpcError(Exception):
    pass


class InvalidParameterError(TgcmpcError, ValueError):
    pass


class DomainError(TgcmpcError, ValueError):
    """Argument outside the region where an expression is defined."""


class LowSpeedError(DomainError):
    pass


class SpeedOutOfRangeError(DomainError):
    pass


class DimensionMismatchError(TgcmpcError, ValueError):
    pass


class EmptySetError(TgcmpcError):
    pass


class InfeasibleSynthesisError(TgcmpcError):
    def __init__(self, message, vx=None, diagnostics=None):
        super().__init__(message)
        self.vx = vx
        self.diagnostics = diagnostics or {}


class BackendUnavailableError(TgcmpcError):
    pass


class ConfigError(TgcmpcError, ValueError):
    pass
