"""Exception hierarchy shared across pipeline stages.

Grouped into config / data / training families so the CLI can map them
to its documented exit codes (2 / 3 / 4).
"""


class WildclassError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(WildclassError):
    """Configuration file problems (CLI exit code 2)."""


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    def __init__(self, key_path: str):
        super().__init__(f"unknown config key: {key_path}")
        self.key_path = key_path


class InvalidValue(ConfigError):
    def __init__(self, key_path: str, constraint: str):
        super().__init__(f"invalid value at {key_path}: {constraint}")
        self.key_path = key_path
        self.constraint = constraint


class DataError(WildclassError):
    """Input data problems (CLI exit code 3)."""


class MalformedFile(DataError):
    pass


class SchemaViolation(DataError):
    def __init__(self, message: str, bbox_id: str | None = None, field: str | None = None):
        detail = message
        if bbox_id is not None:
            detail = f"{detail} (bbox_id={bbox_id}, field={field})"
        super().__init__(detail)
        self.bbox_id = bbox_id
        self.field = field


class OutOfBounds(DataError):
    pass


class EmptyDirectory(DataError):
    pass


class DuplicateJoinKey(DataError):
    pass


class SquareExceedsImage(DataError):
    pass


class NonSquareInput(DataError):
    pass


class EmptyDataset(DataError):
    pass


class MissingAttribute(DataError):
    def __init__(self, attribute: str, bbox_ids: list[str]):
        shown = ", ".join(bbox_ids[:5]) + ("..." if len(bbox_ids) > 5 else "")
        super().__init__(f"attribute '{attribute}' missing for {len(bbox_ids)} entries: {shown}")
        self.attribute = attribute
        self.bbox_ids = bbox_ids


class EmptyEvaluation(DataError):
    pass


class UnknownLabel(DataError):
    pass


class MixedConfig(DataError):
    pass


class DuplicateRunId(DataError):
    pass


class TrainingError(WildclassError):
    """Training failures (CLI exit code 4)."""


class UnsupportedBackbone(TrainingError):
    pass


class WeightsUnavailable(TrainingError):
    pass


class EmptySplit(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, stage: str, epoch: int, batch: int, lr: float):
        super().__init__(
            f"non-finite loss in stage={stage} epoch={epoch} batch={batch} lr={lr}"
        )
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
        self.lr = lr


class ShapeMismatch(TrainingError):
    pass
