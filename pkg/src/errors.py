"""Exception hierarchy shared by services, tools and the CLI."""


class DunbarError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 2


class ConfigError(DunbarError):
    """Invalid or incomplete run configuration."""

    exit_code = 1


class DataError(DunbarError):
    """Input data cannot be processed."""

    exit_code = 2


class MalformedRecordError(DataError):
    """A record failed validation under the strict parse policy."""

    def __init__(self, message: str, record_number: int):
        super().__init__(f"record {record_number}: {message}")
        self.message = message
        self.record_number = record_number

    def __reduce__(self):
        return type(self), (self.message, self.record_number)


class EgoNotFoundError(DataError):
    """The requested ego is not a node of the graph."""


class EmptyPopulationError(DataError):
    """No ego survived selection, or an aggregate received no results."""


class EgoSkippedError(DataError):
    """An ego cannot be clustered; ``reason`` says why."""

    def __init__(self, ego_id: str, reason: str):
        super().__init__(f"ego {ego_id} skipped: {reason}")
        self.ego_id = ego_id
        self.reason = reason

    def __reduce__(self):
        return type(self), (self.ego_id, self.reason)


class MissingLabelsError(DataError):
    """Labels were requested from a file that does not exist."""


class InvalidArgumentError(DunbarError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class UndefinedSilhouetteError(InvalidArgumentError):
    """Silhouette needs at least two clusters."""


class InvariantViolation(DunbarError):
    """An internal invariant did not hold. Always a bug."""

    exit_code = 3
