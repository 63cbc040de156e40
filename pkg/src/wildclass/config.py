"""Experiment configuration: parse, default, validate, fingerprint.

One TOML file drives preprocessing, training, and evaluation. Every
pipeline default lives here and nowhere else; other modules read values
from ExperimentConfig. Unknown keys are hard errors so a typo can never
silently corrupt the experiment record.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import InvalidValue, ParseError, UnknownKey
from .util import atomic_write_text

BACKBONES = ("resnet50", "vgg19", "densenet161", "densenet201")
AUGMENTATION_LEVELS = ("none", "light", "medium", "strong")
CROP_STRATEGIES = ("shift", "pad")
SHIFT_FALLBACKS = ("pad", "error")


@dataclass(frozen=True)
class IOConfig:
    data_dir: str
    output_dir: str
    detections_file: str = ""   # defaults to <data_dir>/detections.json
    annotations_file: str = ""  # defaults to <data_dir>/annotations.json
    model_dir: str = ""         # defaults to <output_dir>/models


@dataclass(frozen=True)
class PreprocessingConfig:
    confidence_threshold: float = 0.96
    crop_strategy: str = "shift"
    target_dim: int = 224
    shift_fallback: str = "pad"


@dataclass(frozen=True)
class StageConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32


@dataclass(frozen=True)
class FinetuneStageConfig(StageConfig):
    learning_rate: float = 1e-4
    unfrozen_depth: int = 1


@dataclass(frozen=True)
class TrainingConfig:
    target_scheme: str = ""
    backbone: str = "resnet50"
    augmentation: str = "medium"
    test_fraction: float = 0.20
    val_fraction: float = 0.15
    stratify_attribute: str = ""  # empty = stratify on the target scheme
    seed: int = 0
    repeats: int = 1
    pretrained: bool = True
    allow_random_fallback: bool = False
    class_weights: bool = False
    transfer_stage: StageConfig = field(default_factory=StageConfig)
    finetune_stage: FinetuneStageConfig = field(default_factory=FinetuneStageConfig)


@dataclass(frozen=True)
class EvaluationConfig:
    uncertainty_threshold: float = 0.5
    exclude_uncertain: bool = True
    stratify_attribute: str = ""  # empty = no stratified report


@dataclass(frozen=True)
class ExperimentConfig:
    io: IOConfig
    preprocessing: PreprocessingConfig = field(default_factory=PreprocessingConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def resolved(self) -> "ExperimentConfig":
        """Fill the path defaults that derive from other paths."""
        io = self.io
        if not io.detections_file:
            io = replace(io, detections_file=str(Path(io.data_dir) / "detections.json"))
        if not io.annotations_file:
            io = replace(io, annotations_file=str(Path(io.data_dir) / "annotations.json"))
        if not io.model_dir:
            io = replace(io, model_dir=str(Path(io.output_dir) / "models"))
        return replace(self, io=io)

    def to_dict(self) -> dict:
        return asdict(self)


_SCHEMA = {
    "io": IOConfig,
    "preprocessing": PreprocessingConfig,
    "training": TrainingConfig,
    "evaluation": EvaluationConfig,
}
_NESTED = {"transfer_stage": StageConfig, "finetune_stage": FinetuneStageConfig}


def _coerce(value, expected: str, key_path: str):
    """Enforce the primitive type an annotation names; TOML ints widen to float."""
    if expected == "bool":
        if not isinstance(value, bool):
            raise InvalidValue(key_path, "must be a boolean")
    elif expected == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidValue(key_path, "must be an integer")
    elif expected == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidValue(key_path, "must be a number")
        value = float(value)
    elif expected == "str":
        if not isinstance(value, str):
            raise InvalidValue(key_path, "must be a string")
    return value


def _build_section(cls, doc: dict, path: str):
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for key, value in doc.items():
        if key not in known:
            raise UnknownKey(f"{path}.{key}")
        if key in _NESTED:
            if not isinstance(value, dict):
                raise InvalidValue(f"{path}.{key}", "must be a table")
            kwargs[key] = _build_section(_NESTED[key], value, f"{path}.{key}")
        else:
            expected = cls.__dataclass_fields__[key].type
            kwargs[key] = _coerce(value, expected, f"{path}.{key}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidValue(path, str(exc)) from exc


def _check(cond: bool, key: str, constraint: str) -> None:
    if not cond:
        raise InvalidValue(key, constraint)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    p, t, e = cfg.preprocessing, cfg.training, cfg.evaluation
    _check(bool(cfg.io.data_dir), "io.data_dir", "required")
    _check(bool(cfg.io.output_dir), "io.output_dir", "required")
    _check(0.0 <= p.confidence_threshold <= 1.0, "preprocessing.confidence_threshold", "must be in [0,1]")
    _check(p.crop_strategy in CROP_STRATEGIES, "preprocessing.crop_strategy", f"one of {CROP_STRATEGIES}")
    _check(p.shift_fallback in SHIFT_FALLBACKS, "preprocessing.shift_fallback", f"one of {SHIFT_FALLBACKS}")
    _check(isinstance(p.target_dim, int) and p.target_dim >= 8, "preprocessing.target_dim", "integer >= 8")
    _check(bool(t.target_scheme), "training.target_scheme", "required")
    _check(t.backbone in BACKBONES, "training.backbone", f"one of {BACKBONES}")
    _check(t.augmentation in AUGMENTATION_LEVELS, "training.augmentation", f"one of {AUGMENTATION_LEVELS}")
    _check(0.0 < t.test_fraction < 1.0, "training.test_fraction", "must be in (0,1)")
    _check(0.0 < t.val_fraction < 1.0, "training.val_fraction", "must be in (0,1)")
    _check(isinstance(t.seed, int), "training.seed", "integer")
    _check(isinstance(t.repeats, int) and t.repeats >= 1, "training.repeats", "integer >= 1")
    for stage_name, stage in (("transfer_stage", t.transfer_stage), ("finetune_stage", t.finetune_stage)):
        _check(isinstance(stage.epochs, int) and stage.epochs >= 1, f"training.{stage_name}.epochs", "integer >= 1")
        _check(stage.learning_rate > 0, f"training.{stage_name}.learning_rate", "must be > 0")
        _check(
            isinstance(stage.batch_size, int) and stage.batch_size >= 1,
            f"training.{stage_name}.batch_size",
            "integer >= 1",
        )
    _check(
        isinstance(t.finetune_stage.unfrozen_depth, int) and t.finetune_stage.unfrozen_depth >= 0,
        "training.finetune_stage.unfrozen_depth",
        "integer >= 0",
    )
    _check(0.0 <= e.uncertainty_threshold <= 1.0, "evaluation.uncertainty_threshold", "must be in [0,1]")
    return cfg


def config_from_dict(doc: dict) -> ExperimentConfig:
    for key in doc:
        if key not in _SCHEMA:
            raise UnknownKey(key)
    if "io" not in doc:
        raise InvalidValue("io", "section required")
    sections = {name: _build_section(cls, doc.get(name, {}), name) for name, cls in _SCHEMA.items()}
    cfg = ExperimentConfig(**sections).resolved()
    return validate_config(cfg)


def load_config(path: Path) -> ExperimentConfig:
    """Parse a TOML experiment file, apply defaults, validate invariants."""
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def fingerprint(config: ExperimentConfig, *, ignore_seed: bool = False) -> str:
    """Stable content hash of the canonical config value.

    Key order and source-file comments cannot affect the hash because it is
    computed over the parsed value with sorted keys. ignore_seed gives the
    experiment-identity hash used to group repeat runs.
    """
    doc = config.to_dict()
    if ignore_seed:
        doc["training"]["seed"] = 0
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return json.dumps(v)


def dump_toml(config: ExperimentConfig) -> str:
    """Emit the config as TOML. load_config(save) round-trips to equality."""
    doc = config.to_dict()
    lines: list[str] = []
    for section, values in doc.items():
        lines.append(f"[{section}]")
        nested = []
        for key, v in values.items():
            if isinstance(v, dict):
                nested.append((key, v))
            else:
                lines.append(f"{key} = {_toml_value(v)}")
        lines.append("")
        for key, sub in nested:
            lines.append(f"[{section}.{key}]")
            for k2, v2 in sub.items():
                lines.append(f"{k2} = {_toml_value(v2)}")
            lines.append("")
    return "\n".join(lines)


def save_config(config: ExperimentConfig, path: Path) -> None:
    atomic_write_text(Path(path), dump_toml(config))
