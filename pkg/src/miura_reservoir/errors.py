"""Exception types shared across the package."""


class ReservoirError(Exception):
    """Base class for all package errors."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class DegenerateGeometry(ReservoirError, ValueError):
    code = "degenerate_geometry"


class InvalidPosition(ReservoirError, ValueError):
    code = "invalid_position"


class NumericalBlowup(ReservoirError, RuntimeError):
    code = "numerical_blowup"

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["time"] = self.time
        return out


class InsufficientSamples(ReservoirError, ValueError):
    code = "insufficient_samples"


class DimensionMismatch(ReservoirError, ValueError):
    code = "dimension_mismatch"


class ChannelMismatch(ReservoirError, ValueError):
    code = "channel_mismatch"


class UnknownChannel(ReservoirError, KeyError):
    code = "unknown_channel"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class FormatError(ReservoirError, ValueError):
    code = "format_error"

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        super().__init__(message)
        self.line = line
        self.column = column

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["line"] = self.line
        out["column"] = self.column
        return out


class RateMismatch(ReservoirError, ValueError):
    code = "rate_mismatch"


class ConfigError(ReservoirError, ValueError):
    code = "config_error"


class ExcessiveLoadWarning(UserWarning):
    """Payload heavier than the range the sheet tolerates without buckling."""


class IntegrityError(ReservoirError):
    code = "integrity_error"
