"""Error hierarchy. Every error carries the exit code the CLI reports for it."""


class HyperwaveError(Exception):
    """Base class for all errors raised by hyperwave."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(HyperwaveError):
    """Invalid run configuration or command-line usage."""

    exit_code = 2


class SpectralCapError(ConfigError):
    """Operator too large for exact eigendecomposition."""


class DataError(HyperwaveError):
    """Input data could not be ingested."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class EmptyDatasetError(DataError):
    pass


class ShapeError(DataError):
    pass


class CheckpointError(HyperwaveError):
    """Checkpoint file is corrupt, truncated or from an unknown version."""

    exit_code = 3


class NumericError(HyperwaveError):
    """Non-finite values or unstable numerics."""

    exit_code = 4


class OverflowGuardError(NumericError):
    pass
