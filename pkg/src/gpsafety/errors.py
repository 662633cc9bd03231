"""Exception hierarchy shared across the toolkit."""


class GpSafetyError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(GpSafetyError):
    """Bad user input: unknown system, malformed config, invalid geometry."""


class NumericError(GpSafetyError):
    """Numerical failure, e.g. a factorization that stays non-PD after jitter."""


class SoundnessError(GpSafetyError):
    """An internal consistency check failed (ill-formed transition row etc.)."""


class ParseError(GpSafetyError):
    """Malformed serialized artifact (dataset, model or IMDP file)."""
