"""Exception types shared across the package.

Each failure mode the library can report has its own class so callers can
distinguish, e.g., a malformed file from a shape mismatch without string
matching.
"""


class LdlabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LdlabError):
    """Invalid configuration: bad architecture descriptor, missing teacher bank, bad spec."""


class DimensionError(LdlabError):
    """Array shapes do not compose or do not match a declared contract."""


class NumericError(LdlabError):
    """Non-finite values where finite ones are required."""


class ContractError(LdlabError):
    """A distribution-valued input violates its invariants (negative mass, bad row sum)."""


class DomainError(LdlabError, ValueError):
    """A scalar parameter is outside its documented range."""


class StateError(LdlabError):
    """An operation was called before the state it needs exists (e.g., missing loss history)."""


class FormatError(LdlabError):
    """A binary file is malformed. Carries the byte offset of the first problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDiverged(LdlabError):
    """Gradients or loss became non-finite during training."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        where = ""
        if epoch is not None:
            where = f" at epoch {epoch}" + (f", batch {batch}" if batch is not None else "")
        super().__init__(message + where)
        self.epoch = epoch
        self.batch = batch
