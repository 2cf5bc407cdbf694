"""Exception types shared across the package."""


class DecortlError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DecortlError):
    """A configuration value or file is invalid or missing."""


class ParseError(DecortlError):
    """A structured input file could not be parsed.

    Carries the offending line number when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class ValidationError(DecortlError):
    """Parsed input violates a semantic invariant (bad ids, zero-norm rows, ...)."""


class LexiconError(ConfigError):
    """A token-class lexicon file is malformed or inconsistent."""


class UnknownTokenId(DecortlError):
    """A token id is outside the backend vocabulary."""


class TokenizeError(DecortlError):
    """Prompt text cannot be expressed with the backend vocabulary."""


class BackendUnavailable(DecortlError):
    """An adapter's transport to the model process failed."""


class InvalidTemperature(ConfigError):
    """Softmax temperature must be strictly positive."""


class InvalidDistribution(DecortlError):
    """A probability vector has negative entries or does not sum to one."""


class InvalidK(ConfigError):
    """Candidate-set or sampling size k is out of range."""


class InvalidP(ConfigError):
    """Nucleus threshold p must satisfy 0 < p <= 1."""


class EmptyInput(DecortlError):
    """An aggregation was asked to summarize nothing."""


class InsufficientSamples(DecortlError):
    """A task has fewer samples than the requested k."""


class CheckerTimeout(DecortlError):
    """An external checker exceeded its wall-clock budget."""


class CheckerSpawnError(DecortlError):
    """An external checker command could not be started at all."""
