class DpaggError(Exception):
    """Base class for library errors."""


class ParameterError(DpaggError, ValueError):
    """Inputs do not conform to the declared parameters."""


class ConfigError(DpaggError, ValueError):
    """A configuration is inconsistent or violates a safety margin."""


class EncodingError(DpaggError, ValueError):
    """A value does not fit the plaintext headroom."""


class ProtocolError(DpaggError):
    """A protocol step was invoked out of order or with a bad quorum."""


class DomainError(DpaggError, ValueError):
    """A bound was evaluated outside the range where it holds."""
