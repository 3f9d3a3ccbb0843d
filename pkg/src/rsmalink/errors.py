"""Exception hierarchy shared by all rsmalink modules."""


class RsmaLinkError(Exception):
    """Base class for every error raised by this package."""


class InvalidModulationError(RsmaLinkError, ValueError):
    """Requested modulation is not a supported square QAM scheme."""


class FramingError(RsmaLinkError, ValueError):
    """Bit stream length is incompatible with the symbol size."""


class NumericError(RsmaLinkError, ValueError):
    """Non-finite or otherwise unusable numeric input."""


class ContractError(RsmaLinkError, ValueError):
    """A caller violated an operation precondition (shape, range, state)."""


class ConfigError(RsmaLinkError, ValueError):
    """Invalid configuration value; the message names the offending key."""


class DegenerateChannelError(RsmaLinkError, ValueError):
    """Channel matrix too degenerate to build a precoder from."""


class EqualizerSingularityError(RsmaLinkError, ArithmeticError):
    """Effective channel gain of an equalizer stage is exactly zero."""


class CoverageError(RsmaLinkError, ValueError):
    """Training data is missing a required (class, corner) combination."""
