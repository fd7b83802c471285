# core/errors.py


class MsfaForgeError(Exception):

    """Raised for any failure inside the msfa_forge pipeline."""
    def __init__(self, component: str, step: str | None, details: str):
        self.component = component
        self.step = step
        self.details = details
        message = f"[{component}] Step: {step or 'N/A'} | {details}"
        super().__init__(message)


class FormatError(MsfaForgeError):
    """Malformed header, payload or JSON document on disk."""


class InvalidDataError(MsfaForgeError):
    """Values violate a domain invariant (range, ordering, finiteness)."""


class ShapeMismatchError(MsfaForgeError):
    """Dimensions, band counts or filter arrays do not agree."""


class BlockIndexError(MsfaForgeError, IndexError):
    """Block index outside the (padded) image."""


class SingularSystemError(MsfaForgeError):
    """Wiener normal equations are singular and no ridge was applied."""


class OptimizationError(MsfaForgeError):
    """The alternating solver hit a non-finite objective."""


class ConfigError(MsfaForgeError):
    """Run configuration is invalid or references missing files."""
