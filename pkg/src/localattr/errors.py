"""Exception types shared across the toolkit."""


class LocalAttrError(Exception):
    """Base class for toolkit errors."""


class ShapeError(LocalAttrError, ValueError):
    """Tensor/layer shapes are incompatible."""


class DomainError(LocalAttrError, ValueError):
    """Numeric values outside the valid domain (NaN/Inf where finite required)."""


class FormatError(LocalAttrError, ValueError):
    """A file does not conform to its declared on-disk format."""


class ConfigError(LocalAttrError, ValueError):
    """Invalid experiment configuration or CLI usage."""
