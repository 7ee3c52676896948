"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateMarginalsError(ValueError):
    """Kappa is undefined: expected disagreement under the marginals is zero."""


class DataError(ValueError):
    """Base class for dataset ingestion problems."""


class MalformedRowError(DataError):
    pass


class RaggedRowError(DataError):
    pass


class LabelRangeError(DataError):
    pass


class HeaderError(DataError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite training loss {value!r} at epoch {epoch}, batch {batch}")
