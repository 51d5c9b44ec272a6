"""Exception types shared across the package."""


class GvckitError(Exception):
    """Base class for all gvckit errors."""


class DataFormatError(GvckitError):
    """A file does not match its canonical layout; messages carry row/column coordinates."""


class UnknownCodeError(GvckitError):
    """Country or sector code not present in the table at hand."""


class InvalidPairError(GvckitError):
    """Exporter and importer must be distinct countries."""


class NumericalError(GvckitError):
    """A dense solve failed its condition-number or residual requirements."""


class ConfigError(GvckitError):
    """Bad run configuration: missing file, out-of-range value, unknown key."""


class EstimationError(GvckitError):
    """Base class for regression failures."""


class InsufficientDataError(EstimationError):
    """Too few observations remain to identify the regression."""


class DegenerateFitError(EstimationError):
    """The outcome has no variation at all; the cell is not estimable."""
