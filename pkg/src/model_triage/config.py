"""
Experiment configuration models, loaded from JSON.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, model_validator

from .dataio import SyntheticSpec
from .errors import ConfigError
from .footprints import DefectType, TrendThresholds
from .injection import InjectionSpec
from .nn import SEED_MAX, Activation, TrainConfig

_SEED_TAGS = {"dataset": 1, "base": 2, "probes": 3, "probe-init": 4, "injection": 5}


class IdxSource(BaseModel):
    train_images: Path
    train_labels: Path
    test_images: Path
    test_labels: Path
    normalize: bool = True
    class_count: Optional[PositiveInt] = None


class DelimitedSource(BaseModel):
    train_path: Path
    test_path: Path
    class_count: PositiveInt


class DatasetSource(BaseModel):
    """Exactly one of ``idx``, ``delimited`` or ``synthetic``."""

    idx: Optional[IdxSource] = None
    delimited: Optional[DelimitedSource] = None
    synthetic: Optional[SyntheticSpec] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "DatasetSource":
        given = [name for name in ("idx", "delimited", "synthetic") if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one dataset source is required, got {given or 'none'}")
        return self

    def file_fields(self) -> dict[str, Path]:
        """Dotted field name -> path, for every file this source reads."""
        source = self.idx or self.delimited
        if source is None:
            return {}
        prefix = "dataset.idx" if self.idx else "dataset.delimited"
        return {
            f"{prefix}.{name}": value
            for name, value in source
            if isinstance(value, Path)
        }


class NetworkConfig(BaseModel):
    hidden_widths: tuple[PositiveInt, ...] = Field(default=(32, 32, 32, 32), min_length=1)
    activation: Activation = Activation.RELU

    @model_validator(mode="after")
    def _no_softmax(self) -> "NetworkConfig":
        if self.activation is Activation.SOFTMAX:
            raise ValueError("hidden layers cannot use softmax")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetSource
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    base_training: TrainConfig = Field(default_factory=TrainConfig)
    probe_training: TrainConfig = Field(default_factory=TrainConfig)
    injection: Optional[InjectionSpec] = None
    thresholds: Optional[TrendThresholds] = None
    include_correct_cases: bool = True
    output_dir: Path = Path("runs/default")
    seed: int = Field(default=0, ge=0, le=SEED_MAX)

    def derive_seed(self, tag: str, seed: int = 0) -> int:
        """Component seed mixed with the global seed."""
        sequence = np.random.SeedSequence([self.seed, seed, _SEED_TAGS[tag]])
        return int(sequence.generate_state(1, dtype=np.uint64)[0])

    def effective_base_training(self) -> TrainConfig:
        return self.base_training.model_copy(
            update={"seed": self.derive_seed("base", self.base_training.seed)}
        )

    def effective_probe_training(self) -> TrainConfig:
        return self.probe_training.model_copy(
            update={"seed": self.derive_seed("probes", self.probe_training.seed)}
        )

    def effective_injection(self) -> Optional[InjectionSpec]:
        if self.injection is None:
            return None
        return self.injection.model_copy(
            update={"seed": self.derive_seed("injection", self.injection.seed)}
        )

    def effective_synthetic(self) -> Optional[SyntheticSpec]:
        spec = self.dataset.synthetic
        if spec is None:
            return None
        return spec.model_copy(update={"seed": self.derive_seed("dataset", spec.seed)})

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"seed": seed})

    def with_output_dir(self, output_dir: str | Path) -> "ExperimentConfig":
        return self.model_copy(update={"output_dir": Path(output_dir)})

    def with_injection_kind(self, kind: Optional[DefectType]) -> "ExperimentConfig":
        """Same config injecting ``kind`` (None removes the injection)."""
        if kind is None:
            return self.model_copy(update={"injection": None})
        base = self.injection or InjectionSpec(kind=kind)
        return self.model_copy(update={"injection": base.model_copy(update={"kind": kind})})

    def check_paths(self) -> None:
        for field, path in self.dataset.file_fields().items():
            if not path.exists():
                raise ConfigError(f"file not found: {path}", field=field)


def _rebase(source: BaseModel, base_dir: Path) -> BaseModel:
    updates = {
        name: value if value.is_absolute() else base_dir / value
        for name, value in source
        if isinstance(value, Path)
    }
    return source.model_copy(update=updates)


def parse_config(data: dict, base_dir: str | Path | None = None) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        raise ConfigError(error["msg"], field=field) from exc
    if base_dir is None:
        return config
    base_dir = Path(base_dir)
    dataset = config.dataset
    if dataset.idx is not None:
        dataset = dataset.model_copy(update={"idx": _rebase(dataset.idx, base_dir)})
    elif dataset.delimited is not None:
        dataset = dataset.model_copy(update={"delimited": _rebase(dataset.delimited, base_dir)})
    return config.model_copy(update={"dataset": dataset})


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment configuration; relative data paths follow the file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}", field="config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field="config") from exc
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a JSON object", field="config")
    return parse_config(data, path.parent)
