"""Exception hierarchy shared across the package.

Every error raised by kreply belongs to one of four categories, which the
CLI maps to exit codes: config (1), io (2), numeric/contract (3).
"""


class KreplyError(Exception):
    """Base class for all package errors."""

    category = "contract"


class ContractError(KreplyError):
    """A caller violated a documented precondition."""

    category = "contract"


class NumericError(KreplyError):
    """A numeric-domain failure: non-finite values, bad shapes mid-flight."""

    category = "numeric"


class ConfigError(KreplyError):
    """Invalid or unknown configuration."""

    category = "config"


class CorpusFormatError(KreplyError):
    """Malformed corpus, vocabulary, or results file."""

    category = "io"


class CheckpointError(KreplyError):
    """Unreadable, truncated, or incompatible checkpoint."""

    category = "io"
