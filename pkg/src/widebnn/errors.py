"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """Raised when an input file does not match the expected binary layout."""


class CorruptRecordError(DataFormatError):
    """Raised when a record is structurally valid but semantically impossible."""


class LayoutError(ValueError):
    """Raised when a flat weight vector does not match the network layout."""


class NumericsError(ArithmeticError):
    """Raised when a computation produces or receives non-finite values."""


class CheckpointError(RuntimeError):
    """Raised on checkpoint version or configuration-hash mismatch."""


class ConfigError(ValueError):
    """Raised for invalid experiment plans or CLI configuration."""
