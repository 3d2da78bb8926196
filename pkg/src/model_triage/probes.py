"""
Softmax probes attached to every hidden layer of a frozen base model.

Probe ``j`` (1-based hidden-layer index) is a single softmax layer fed by the
post-activation output of base layer ``j``. Probes are trained on the same
training data as the base while the base parameters stay untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Hashable, Iterator, Sequence

import numpy as np

from .errors import ProbeStateError, ShapeError, StructureError
from .nn import (
    Activation,
    LabeledDataset,
    Model,
    TrainConfig,
    forward_capture,
    forward_capture_batch,
    glorot_uniform,
    layer_forward,
    sgd_fit,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Probe:
    layer_index: int
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64)
        biases = np.array(self.biases, dtype=np.float64)
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise ShapeError(f"probe {self.layer_index}: weights {weights.shape} / biases {biases.shape}")
        weights.setflags(write=False)
        biases.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    def apply(self, hidden_output: np.ndarray) -> np.ndarray:
        """Class-likelihood vector (or rows) for a hidden layer's output."""
        flat = np.asarray(hidden_output, dtype=np.float64)
        if flat.ndim > 2:
            flat = flat.reshape(flat.shape[0], -1)
        return layer_forward(self.weights, self.biases, Activation.SOFTMAX, flat)


@dataclass(frozen=True, eq=False)
class InstrumentedModel:
    base: Model
    probes: tuple[Probe, ...]
    trained: bool = False

    def __post_init__(self) -> None:
        if len(self.probes) != self.base.spec.hidden_count:
            raise StructureError(
                f"{len(self.probes)} probes for {self.base.spec.hidden_count} hidden layers"
            )
        class_count = self.base.spec.class_count
        for expected, probe in enumerate(self.probes, start=1):
            width = self.base.spec.layers[expected - 1].output_width
            if probe.layer_index != expected or probe.weights.shape != (class_count, width):
                raise StructureError(f"probe {probe.layer_index} does not fit hidden layer {expected}")

    @property
    def layer_count(self) -> int:
        return self.base.spec.layer_count


@dataclass(frozen=True, eq=False)
class FootprintSpecifics:
    """Per-layer class likelihoods ``[S_1, ..., S_n]`` of one case."""

    per_layer_likelihoods: tuple[np.ndarray, ...]
    source_case_id: Hashable
    true_label: int
    predicted_label: int

    @property
    def is_faulty(self) -> bool:
        return self.predicted_label != self.true_label


def instrument(base: Model, seed: int) -> InstrumentedModel:
    """Attach one freshly initialized softmax probe to every hidden layer."""
    if base.spec.hidden_count < 1:
        raise StructureError("the base model has no hidden layer to probe")
    rng = np.random.default_rng(seed)
    class_count = base.spec.class_count
    probes = []
    for index, layer in enumerate(base.spec.layers[:-1], start=1):
        probes.append(
            Probe(
                layer_index=index,
                weights=glorot_uniform(rng, class_count, layer.output_width),
                biases=np.zeros(class_count),
            )
        )
    return InstrumentedModel(base, tuple(probes))


def _probe_rng(cfg: TrainConfig, layer_index: int) -> np.random.Generator:
    # one stream per probe keeps the result independent of training order
    return np.random.default_rng([cfg.seed, layer_index])


def train_probe(
    probe: Probe,
    hidden_outputs: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> tuple[Probe, list[float]]:
    weights = [probe.weights.copy()]
    biases = [probe.biases.copy()]
    losses = sgd_fit(
        weights,
        biases,
        [Activation.SOFTMAX],
        hidden_outputs,
        labels,
        cfg,
        _probe_rng(cfg, probe.layer_index),
        label=f"probe {probe.layer_index}",
    )
    return Probe(probe.layer_index, weights[0], biases[0]), losses


def capture_hidden_outputs(base: Model, data: LabeledDataset) -> list[np.ndarray]:
    """Post-activation outputs of every hidden layer, one row per case."""
    return forward_capture_batch(base, data.inputs)[:-1]


def train_probes(
    im: InstrumentedModel,
    data: LabeledDataset,
    cfg: TrainConfig,
    *,
    order: Sequence[int] | None = None,
) -> InstrumentedModel:
    """
    Train every probe by cross-entropy on its hidden layer's outputs.

    The base is only read. ``order`` lists 1-based probe indices and only
    changes the sequence in which probes are fitted, not their result.
    """
    if len(data) == 0:
        raise ValueError("cannot train probes on an empty dataset")
    if data.width != im.base.spec.input_width:
        raise ShapeError(f"dataset width {data.width} != base input width {im.base.spec.input_width}")
    if cfg.batch_size > len(data):
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")

    hidden = capture_hidden_outputs(im.base, data)
    trained = list(im.probes)
    for index in order or range(1, len(im.probes) + 1):
        probe, losses = train_probe(im.probes[index - 1], hidden[index - 1], data.labels, cfg)
        trained[index - 1] = probe
        logger.info("probe %d trained: loss %.4f -> %.4f", index, losses[0], losses[-1])
    return replace(im, probes=tuple(trained), trained=True)


def probe_accuracy(im: InstrumentedModel, data: LabeledDataset) -> list[float]:
    """Training-style accuracy of each probe on ``data``."""
    hidden = capture_hidden_outputs(im.base, data)
    return [
        float(np.mean(np.argmax(probe.apply(outputs), axis=1) == data.labels))
        for probe, outputs in zip(im.probes, hidden)
    ]


def extract_dfs(
    im: InstrumentedModel,
    case: np.ndarray,
    true_label: int,
    case_id: Hashable = None,
) -> FootprintSpecifics:
    if not im.trained:
        raise ProbeStateError("probes must be trained before footprints can be extracted")
    outputs = forward_capture(im.base, case)
    likelihoods = [probe.apply(outputs[probe.layer_index - 1]) for probe in im.probes]
    likelihoods.append(outputs[-1])
    return FootprintSpecifics(
        per_layer_likelihoods=tuple(likelihoods),
        source_case_id=case_id,
        true_label=int(true_label),
        predicted_label=int(np.argmax(outputs[-1])),
    )


def iter_dfs(im: InstrumentedModel, data: LabeledDataset) -> Iterator[FootprintSpecifics]:
    for x, label, case_id in zip(data.inputs, data.labels, data.case_ids):
        yield extract_dfs(im, x, int(label), int(case_id))


def extract_faulty_dfs(im: InstrumentedModel, test: LabeledDataset) -> list[FootprintSpecifics]:
    """Footprints of the misclassified cases of ``test``, in dataset order."""
    return [dfs for dfs in iter_dfs(im, test) if dfs.is_faulty]
