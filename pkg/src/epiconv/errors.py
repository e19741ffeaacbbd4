"""Exception hierarchy shared by every module in the package."""


class EpiconvError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(EpiconvError):
    """A dataset file is malformed or violates the documented CSV schema."""


class DimensionError(EpiconvError):
    """Array shapes are incompatible with each other or with the configuration."""


class DegenerateDataError(EpiconvError):
    """The data cannot support the requested computation (e.g. one-class AUC)."""


class ModelFormatError(EpiconvError):
    """A model file declares an unknown or unsupported format version."""


class ModelIntegrityError(EpiconvError):
    """A model file is truncated or fails its payload checksum."""


class DivergenceError(EpiconvError):
    """An optimization produced a non-finite loss and cannot recover."""
