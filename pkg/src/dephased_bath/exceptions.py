class DephasedBathError(Exception):
    """Base class for errors raised by this package."""


class InvalidStateError(DephasedBathError, ValueError):
    """A density matrix or state preparation violates its physical constraints."""


class NumericalError(DephasedBathError, RuntimeError):
    """Integration, fitting or sampling failed or drifted past tolerance."""


class ConfigError(DephasedBathError, ValueError):
    """A scenario configuration failed validation."""
