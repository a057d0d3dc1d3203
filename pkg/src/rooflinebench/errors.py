"""Exception hierarchy shared across the package.

User-facing commands map ConfigError (and subclasses) to exit code 1 and
anything else to exit code 2, so raising the right class matters.
"""


class RooflineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RooflineError):
    """Invalid configuration, schema violation, or missing required field."""


class CapabilityError(ConfigError):
    """A hardware capability (peak or bandwidth) was requested but not profiled."""


class DomainError(RooflineError):
    """An operation was invoked outside its mathematical domain."""


class DegenerateCostError(DomainError):
    """A cost breakdown with zero memory traffic cannot be placed on the plane."""


class IngestError(RooflineError):
    """A document could not be parsed at all (row-level issues are collected, not raised)."""


class JoinError(RooflineError):
    """A run record and an architecture config could not be joined."""


class ProbeError(RooflineError):
    """A hardware probe could not run or produced unusable measurements."""
