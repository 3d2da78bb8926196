"""
Command implementations: train, inject, analyze and the full experiment.

Each ``cmd_*`` function takes a validated ExperimentConfig, writes its
artifacts into ``config.output_dir`` and returns a result object. The CLI is a
thin layer over these.
"""

from __future__ import annotations

import logging
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .config import ExperimentConfig
from .dataio import generate_synthetic_split, load_delimited, load_idx
from .errors import ConfigError, ShapeError
from .footprints import (
    CorrectTrend,
    DefectType,
    TrendThresholds,
    classify_correct_trend,
    default_thresholds,
    diagnose,
    value_rank_list,
)
from .injection import InjectionManifest, apply_injection
from .nn import LabeledDataset, Model, NetworkSpec, accuracy, train_with_history
from .probes import instrument, iter_dfs, probe_accuracy, train_probes
from .renderer import render_docx, render_text
from .report import ReportDocument, build_report, report_to_json, trajectory_table
from .serialization import (
    dataset_to_bytes,
    instrumented_to_bytes,
    load_model,
    model_to_bytes,
)
from .storage import RunStorage

logger = logging.getLogger(__name__)

MODEL_FILE = "model.msc1"
INSTRUMENTED_FILE = "instrumented.msc1"
INJECTED_DATASET_FILE = "train_injected.dsc1"


@dataclass
class PreparedData:
    train: LabeledDataset
    test: LabeledDataset
    network: NetworkSpec
    manifest: Optional[InjectionManifest] = None


@dataclass
class TrainOutcome:
    model: Model
    model_path: Path
    train_accuracy: float
    test_accuracy: float
    epoch_losses: list[float] = field(default_factory=list)


@dataclass
class ExperimentSummary:
    injected: Optional[DefectType]
    reported: Optional[DefectType]
    output_dir: Path
    seed: int = 0
    report: Optional[ReportDocument] = None

    @property
    def match(self) -> bool:
        return self.injected == self.reported

    def summary_line(self) -> str:
        injected = self.injected.value if self.injected else "none"
        reported = self.reported.value if self.reported else "none"
        return f"injected={injected} reported={reported} match={'true' if self.match else 'false'}"


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag any exception escaping the block with the pipeline stage name."""
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name  # type: ignore[attr-defined]
        logger.error("%s stage failed: %s", name, exc)
        raise


def _with_class_count(data: LabeledDataset, class_count: int) -> LabeledDataset:
    if data.class_count == class_count:
        return data
    return LabeledDataset(data.inputs, data.labels, class_count, data.case_ids)


def load_datasets(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Training and test sets of the configured source."""
    config.check_paths()
    source = config.dataset
    if source.idx is not None:
        idx = source.idx
        train = load_idx(idx.train_images, idx.train_labels, idx.normalize, idx.class_count)
        test = load_idx(idx.test_images, idx.test_labels, idx.normalize, idx.class_count)
        class_count = max(train.class_count, test.class_count)
        train, test = _with_class_count(train, class_count), _with_class_count(test, class_count)
    elif source.delimited is not None:
        train = load_delimited(source.delimited.train_path, source.delimited.class_count)
        test = load_delimited(source.delimited.test_path, source.delimited.class_count)
    else:
        synthetic = config.effective_synthetic()
        if synthetic.test_cases_per_class == 0:
            raise ConfigError("a synthetic experiment needs test cases", field="dataset.synthetic.test_cases_per_class")
        train, test = generate_synthetic_split(synthetic)
    if train.width != test.width:
        raise ShapeError(f"training width {train.width} != test width {test.width}")
    if len(test) == 0:
        raise ConfigError("the test set is empty", field="dataset")
    return train, test


def prepare(config: ExperimentConfig) -> PreparedData:
    """Load data, build the network spec and apply the configured injection."""
    with stage("load"):
        train, test = load_datasets(config)
        network = NetworkSpec.dense(
            train.width, config.network.hidden_widths, train.class_count, config.network.activation
        )
    injection = config.effective_injection()
    if injection is None:
        return PreparedData(train, test, network)
    with stage("inject"):
        train, network, manifest = apply_injection(injection, train, network)
    return PreparedData(train, test, network, manifest)


def _write_injection(storage: RunStorage, prepared: PreparedData) -> None:
    manifest = prepared.manifest
    storage.write_json("injection_manifest", "injection_manifest.json", manifest.model_dump(mode="json"))
    storage.write_json("network", "network.json", prepared.network.model_dump(mode="json"))
    if manifest.kind is not DefectType.SD:
        storage.write_bytes("injected_dataset", INJECTED_DATASET_FILE, dataset_to_bytes(prepared.train))


def _train_stage(config: ExperimentConfig, prepared: PreparedData, storage: RunStorage) -> TrainOutcome:
    with stage("train"):
        run = train_with_history(prepared.network, prepared.train, config.effective_base_training())
        outcome = TrainOutcome(
            model=run.model,
            model_path=storage.write_bytes("model", MODEL_FILE, model_to_bytes(run.model)),
            train_accuracy=accuracy(run.model, prepared.train),
            test_accuracy=accuracy(run.model, prepared.test),
            epoch_losses=run.epoch_losses,
        )
        storage.write_json(
            "training",
            "training.json",
            {
                "epoch_losses": [round(loss, 10) for loss in outcome.epoch_losses],
                "train_accuracy": round(outcome.train_accuracy, 6),
                "test_accuracy": round(outcome.test_accuracy, 6),
                "layer_count": run.model.spec.layer_count,
            },
        )
    logger.info("train accuracy %.4f, test accuracy %.4f", outcome.train_accuracy, outcome.test_accuracy)
    return outcome


def _analyze_stage(
    config: ExperimentConfig,
    prepared: PreparedData,
    model: Model,
    storage: RunStorage,
    thresholds: Optional[TrendThresholds] = None,
    docx: bool = False,
) -> ReportDocument:
    with stage("analyze"):
        if model.spec.input_width != prepared.train.width:
            raise ShapeError(
                f"model expects {model.spec.input_width} inputs but the dataset has {prepared.train.width}"
            )
        im = instrument(model, config.derive_seed("probe-init"))
        im = train_probes(im, prepared.train, config.effective_probe_training())
        storage.write_bytes("instrumented", INSTRUMENTED_FILE, instrumented_to_bytes(im))

        footprints = list(iter_dfs(im, prepared.test))
        faulty = [dfs for dfs in footprints if dfs.is_faulty]
        th = thresholds or config.thresholds or default_thresholds(model.spec.layer_count)
        defects = diagnose(faulty, th)

        correct_trends = None
        if config.include_correct_cases:
            tally = Counter(
                classify_correct_trend(value_rank_list(dfs)) for dfs in footprints if not dfs.is_faulty
            )
            correct_trends = {trend: tally.get(trend, 0) for trend in CorrectTrend}

        report = build_report(
            defects,
            config=config.model_dump(mode="json", exclude={"output_dir"}),
            layer_count=model.spec.layer_count,
            thresholds=th,
            base_test_accuracy=1.0 - len(faulty) / len(prepared.test),
            probe_train_accuracy=probe_accuracy(im, prepared.train),
            test_case_count=len(prepared.test),
            correct_trends=correct_trends,
            injection=prepared.manifest,
        )
    with stage("report"):
        storage.write_text("report", "report.json", report_to_json(report))
        storage.write_text("report_text", "report.txt", render_text(report))
        storage.write_text("trajectories", "trajectories.csv", trajectory_table(report))
        if docx:
            render_docx(report, storage.record("report_docx", "report.docx"))
    return report


def cmd_train(config: ExperimentConfig) -> TrainOutcome:
    prepared = prepare(config)
    with RunStorage(config.output_dir) as storage:
        if prepared.manifest is not None:
            _write_injection(storage, prepared)
        return _train_stage(config, prepared, storage)


def cmd_inject(config: ExperimentConfig) -> InjectionManifest:
    if config.injection is None:
        raise ConfigError("no injection is configured", field="injection")
    prepared = prepare(config)
    with RunStorage(config.output_dir) as storage:
        _write_injection(storage, prepared)
    return prepared.manifest


def cmd_analyze(
    config: ExperimentConfig,
    model_path: str | Path,
    thresholds: Optional[TrendThresholds] = None,
    docx: bool = False,
) -> ReportDocument:
    prepared = prepare(config)
    with stage("load-model"):
        model = load_model(model_path)
    with RunStorage(config.output_dir) as storage:
        return _analyze_stage(config, prepared, model, storage, thresholds, docx)


def cmd_experiment(
    config: ExperimentConfig,
    thresholds: Optional[TrendThresholds] = None,
    docx: bool = False,
) -> ExperimentSummary:
    """Inject (optional), train and analyze in one run directory."""
    prepared = prepare(config)
    with RunStorage(config.output_dir) as storage:
        if prepared.manifest is not None:
            _write_injection(storage, prepared)
        outcome = _train_stage(config, prepared, storage)
        report = _analyze_stage(config, prepared, outcome.model, storage, thresholds, docx)
        summary = ExperimentSummary(
            injected=prepared.manifest.kind if prepared.manifest else None,
            reported=report.dominant,
            output_dir=config.output_dir,
            seed=config.seed,
            report=report,
        )
        storage.write_text("summary", "summary.txt", summary.summary_line() + "\n")
    logger.info(summary.summary_line())
    return summary


def run_experiment_grid(
    config: ExperimentConfig,
    seeds: Sequence[int],
    kinds: Sequence[Optional[DefectType]],
    thresholds: Optional[TrendThresholds] = None,
    docx: bool = False,
) -> list[ExperimentSummary]:
    """One experiment per (kind, seed), each in ``<output_dir>/<kind>-seed<seed>``."""
    summaries = []
    for kind in kinds:
        for seed in seeds:
            name = f"{kind.value if kind else 'none'}-seed{seed}"
            run_config = (
                config.with_injection_kind(kind)
                .with_seed(seed)
                .with_output_dir(Path(config.output_dir) / name)
            )
            summaries.append(cmd_experiment(run_config, thresholds, docx))
    with RunStorage(config.output_dir) as storage:
        storage.write_json(
            "grid",
            "grid.json",
            [
                {
                    "run": summary.output_dir.name,
                    "seed": summary.seed,
                    "injected": summary.injected.value if summary.injected else None,
                    "reported": summary.reported.value if summary.reported else None,
                    "match": summary.match,
                }
                for summary in summaries
            ],
        )
    return summaries
