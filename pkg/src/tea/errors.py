"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config value is inconsistent with the model or data geometry."""


class DataFormatError(ValueError):
    """An on-disk artifact does not conform to the documented format."""


class ValidationError(ValueError):
    """A loaded or constructed object violates its invariants."""
