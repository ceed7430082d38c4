"""Exception and warning types shared across the package."""


class LoraplError(Exception):
    """Base class for all package errors."""


class ValidationError(LoraplError, ValueError):
    """Input or configuration failed validation."""


class ZeroDistance(ValidationError):
    """Sensor and gateway positions coincide; log-distance terms are undefined."""


class SchemaError(ValidationError):
    """Required CSV columns are missing."""


class UnknownGateway(ValidationError):
    def __init__(self, gateway_id: str):
        super().__init__(f"unknown gateway id {gateway_id!r}")
        self.gateway_id = gateway_id


class EmptyInput(ValidationError):
    pass


class DegenerateInput(ValidationError):
    """Not enough distinct distances to fit a line."""


class SizeExceedsPopulation(ValidationError):
    pass


class ProviderUnavailable(LoraplError):
    """Snap provider could not answer (timeout, connection error, fixture miss)."""


class SnapMiss(ProviderUnavailable):
    """Provider answered but has no street for this position."""


class ProviderDown(ProviderUnavailable):
    """Too many consecutive transport failures; stop asking."""


class OutOfValidityRange(UserWarning):
    """A model was evaluated outside its published validity window."""
