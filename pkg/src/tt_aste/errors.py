class ConfigError(ValueError):
    """Invalid model or run configuration."""


class DataError(ValueError):
    """Corpus content that fails validation or parsing."""


class GeometryError(ValueError):
    """A rectangle whose top-left vertex is not weakly above-left of its bottom-right."""
