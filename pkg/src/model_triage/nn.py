"""
Dense feed-forward classifier engine.

Everything is float64 numpy. A network is an ordered stack of Dense layers,
each computing ``g(W @ x + b)``; the final layer is always softmax. The
functions here cover the forward pass (with capture of every layer's
output), backpropagation for softmax cross-entropy, and plain mini-batch SGD.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from .errors import DivergenceError, ShapeError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SEED_MAX = 2**64 - 1


class LayerKind(str, Enum):
    DENSE = "dense"


class Activation(str, Enum):
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LayerKind = LayerKind.DENSE
    input_width: PositiveInt
    output_width: PositiveInt
    activation: Activation = Activation.RELU


class NetworkSpec(BaseModel):
    """Layer architecture of a classifier. The input layer is implicit."""

    model_config = ConfigDict(frozen=True)

    layers: tuple[LayerSpec, ...]
    class_count: PositiveInt

    @model_validator(mode="after")
    def _check_chain(self) -> "NetworkSpec":
        if len(self.layers) < 2:
            raise ValueError("a network needs at least one hidden layer and an output layer")
        for j, (current, following) in enumerate(zip(self.layers, self.layers[1:])):
            if current.output_width != following.input_width:
                raise ValueError(
                    f"layer {j} outputs {current.output_width} values "
                    f"but layer {j + 1} expects {following.input_width}"
                )
        for j, layer in enumerate(self.layers[:-1]):
            if layer.activation is Activation.SOFTMAX:
                raise ValueError(f"softmax is only allowed on the output layer (found on layer {j})")
        output = self.layers[-1]
        if output.activation is not Activation.SOFTMAX:
            raise ValueError("the output layer must use softmax")
        if output.output_width != self.class_count:
            raise ValueError(
                f"output layer width {output.output_width} != class_count {self.class_count}"
            )
        return self

    @classmethod
    def dense(
        cls,
        input_width: int,
        hidden_widths: Sequence[int],
        class_count: int,
        activation: Activation = Activation.RELU,
    ) -> "NetworkSpec":
        widths = [input_width, *hidden_widths]
        layers = [
            LayerSpec(input_width=fan_in, output_width=fan_out, activation=activation)
            for fan_in, fan_out in zip(widths, widths[1:])
        ]
        layers.append(
            LayerSpec(input_width=widths[-1], output_width=class_count, activation=Activation.SOFTMAX)
        )
        return cls(layers=tuple(layers), class_count=class_count)

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def hidden_count(self) -> int:
        return len(self.layers) - 1


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: PositiveFloat = 0.05
    epochs: PositiveInt = 20
    batch_size: PositiveInt = 32
    seed: int = Field(default=0, ge=0, le=SEED_MAX)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Cases as rows of ``inputs`` with integer ``labels``.

    ``case_ids`` identify cases across injections and splits; they default to
    the row positions.
    """

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    case_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        inputs = np.array(self.inputs, dtype=np.float64)
        if inputs.ndim != 2:
            raise ShapeError(f"dataset inputs must be a 2-D array of cases, got shape {inputs.shape}")
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != inputs.shape[0]:
            raise ShapeError(f"{inputs.shape[0]} inputs but {labels.shape[0]} labels")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not np.all(np.isfinite(inputs)):
            raise ValueError("dataset inputs contain NaN or Inf")
        if self.case_ids is None:
            case_ids = np.arange(inputs.shape[0], dtype=np.int64)
        else:
            case_ids = np.array(self.case_ids, dtype=np.int64).reshape(-1)
            if case_ids.shape != labels.shape:
                raise ShapeError("case_ids must have one entry per case")
        object.__setattr__(self, "inputs", _readonly(inputs))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "case_ids", _readonly(case_ids))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.inputs.shape[1])

    def class_indices(self, label: int) -> np.ndarray:
        """Row positions of the cases carrying ``label``, in dataset order."""
        return np.flatnonzero(self.labels == label)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, rows: Sequence[int] | np.ndarray) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            self.inputs[rows], self.labels[rows], self.class_count, self.case_ids[rows]
        )

    def with_labels(self, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.inputs, labels, self.class_count, self.case_ids)


@dataclass(frozen=True, eq=False)
class Model:
    """Learned parameters of a NetworkSpec; arrays are read-only."""

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != self.spec.layer_count or len(self.biases) != self.spec.layer_count:
            raise ShapeError("one weight matrix and one bias vector are required per layer")
        weights, biases = [], []
        for j, (layer, w, b) in enumerate(zip(self.spec.layers, self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (layer.output_width, layer.input_width):
                raise ShapeError(
                    f"layer {j} weights have shape {w.shape}, "
                    f"expected {(layer.output_width, layer.input_width)}"
                )
            if b.shape != (layer.output_width,):
                raise ShapeError(f"layer {j} bias has shape {b.shape}, expected {(layer.output_width,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {j} parameters contain NaN or Inf")
            weights.append(_readonly(w))
            biases.append(_readonly(b))
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))

    @property
    def activations(self) -> list[Activation]:
        return [layer.activation for layer in self.spec.layers]


class Prediction(NamedTuple):
    probabilities: np.ndarray
    predicted_class: int


class TrainingRun(NamedTuple):
    model: Model
    epoch_losses: list[float]


def softmax(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    """Numerically safe softmax of a single logit vector."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax expects a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input contains NaN or Inf")
    exps = np.exp(x - x.max())
    return exps / exps.sum()


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    exps = np.exp(z - z.max(axis=-1, keepdims=True))
    return exps / exps.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.SOFTMAX:
        return _softmax_rows(z)
    return z


def _activation_derivative(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def layer_forward(
    weights: np.ndarray,
    bias: np.ndarray,
    activation: Activation | str,
    inputs: np.ndarray,
) -> np.ndarray:
    """
    Apply one Dense layer, ``g(W @ x + b)``.

    ``inputs`` may be a single vector or a batch of row vectors.
    """
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    if w.ndim != 2 or b.shape != (w.shape[0],):
        raise ShapeError(f"weights {w.shape} and bias {b.shape} do not describe a layer")
    if x.ndim not in (1, 2) or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"layer expects inputs of width {w.shape[1]}, got shape {x.shape}")
    return _activate(x @ w.T + b, Activation(activation))


def _as_case(model: Model, case: np.ndarray) -> np.ndarray:
    x = np.asarray(case, dtype=np.float64).reshape(-1)
    if x.size != model.spec.input_width:
        raise ShapeError(f"model expects {model.spec.input_width} input values, got {x.size}")
    return x


def _as_batch(model: Model, cases: np.ndarray) -> np.ndarray:
    x = np.asarray(cases, dtype=np.float64)
    x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x.reshape(1, -1)
    if x.shape[1] != model.spec.input_width:
        raise ShapeError(f"model expects {model.spec.input_width} input values, got {x.shape[1]}")
    return x


def forward_capture(model: Model, case: np.ndarray) -> list[np.ndarray]:
    """Outputs of every layer for one case; the last entry is the softmax output."""
    current = _as_case(model, case)
    outputs = []
    for layer, w, b in zip(model.spec.layers, model.weights, model.biases):
        current = layer_forward(w, b, layer.activation, current)
        outputs.append(current)
    return outputs


def forward_capture_batch(model: Model, cases: np.ndarray) -> list[np.ndarray]:
    current = _as_batch(model, cases)
    outputs = []
    for layer, w, b in zip(model.spec.layers, model.weights, model.biases):
        current = layer_forward(w, b, layer.activation, current)
        outputs.append(current)
    return outputs


def predict(model: Model, case: np.ndarray) -> Prediction:
    probabilities = forward_capture(model, case)[-1]
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return Prediction(probabilities, int(np.argmax(probabilities)))


def predict_batch(model: Model, cases: np.ndarray) -> np.ndarray:
    return forward_capture_batch(model, cases)[-1]


def accuracy(model: Model, data: LabeledDataset) -> float:
    if len(data) == 0:
        return 0.0
    predicted = np.argmax(predict_batch(model, data.inputs), axis=1)
    return float(np.mean(predicted == data.labels))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_model(spec: NetworkSpec, seed: int) -> Model:
    """Untrained model with seeded Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = _init_parameters(spec, rng)
    return Model(spec, tuple(weights), tuple(biases))


def _init_parameters(spec: NetworkSpec, rng: np.random.Generator) -> tuple[list, list]:
    weights = [glorot_uniform(rng, layer.output_width, layer.input_width) for layer in spec.layers]
    biases = [np.zeros(layer.output_width) for layer in spec.layers]
    return weights, biases


def _forward_pass(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activations: Sequence[Activation],
    x: np.ndarray,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    pre, post = [], []
    current = x
    for w, b, activation in zip(weights, biases, activations):
        z = current @ w.T + b
        current = _activate(z, activation)
        pre.append(z)
        post.append(current)
    return pre, post


def cross_entropy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy with probabilities clamped to PROB_FLOOR before the log."""
    picked = probabilities[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def _backward(
    weights: Sequence[np.ndarray],
    activations: Sequence[Activation],
    x: np.ndarray,
    pre: list[np.ndarray],
    post: list[np.ndarray],
    labels: np.ndarray,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # the last activation is softmax, so dL/dz for the output is (p - onehot) / m
    count = x.shape[0]
    delta = post[-1].copy()
    delta[np.arange(count), labels] -= 1.0
    delta /= count
    grad_w: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    for j in range(len(weights) - 1, -1, -1):
        previous = x if j == 0 else post[j - 1]
        grad_w[j] = delta.T @ previous
        grad_b[j] = delta.sum(axis=0)
        if j > 0:
            delta = (delta @ weights[j]) * _activation_derivative(pre[j - 1], activations[j - 1])
    return grad_w, grad_b


def sgd_fit(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    activations: Sequence[Activation],
    x: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    *,
    label: str = "training",
) -> list[float]:
    """
    Mini-batch SGD on softmax cross-entropy, updating ``weights``/``biases`` in place.

    Returns the mean loss of every epoch. Raises DivergenceError as soon as an
    epoch's loss is not finite.
    """
    count = x.shape[0]
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x[batch], labels[batch]
            with np.errstate(over="ignore", invalid="ignore"):
                pre, post = _forward_pass(weights, biases, activations, xb)
                total += cross_entropy(post[-1], yb) * batch.shape[0]
                grad_w, grad_b = _backward(weights, activations, xb, pre, post, yb)
            for j in range(len(weights)):
                weights[j] -= cfg.learning_rate * grad_w[j]
                biases[j] -= cfg.learning_rate * grad_b[j]
        mean_loss = total / count
        if not math.isfinite(mean_loss):
            raise DivergenceError(epoch, label)
        losses.append(mean_loss)
        logger.debug("%s epoch %d/%d loss=%.6f", label, epoch, cfg.epochs, mean_loss)
    return losses


def train_with_history(spec: NetworkSpec, data: LabeledDataset, cfg: TrainConfig) -> TrainingRun:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.width != spec.input_width:
        raise ShapeError(f"dataset width {data.width} != network input width {spec.input_width}")
    if int(data.labels.max()) >= spec.class_count:
        raise ValueError(f"dataset labels exceed the network's {spec.class_count} classes")
    if cfg.batch_size > len(data):
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")

    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_parameters(spec, rng)
    activations = [layer.activation for layer in spec.layers]
    losses = sgd_fit(weights, biases, activations, data.inputs, data.labels, cfg, rng)
    logger.info(
        "trained %d-layer network on %d cases: loss %.4f -> %.4f",
        spec.layer_count,
        len(data),
        losses[0],
        losses[-1],
    )
    return TrainingRun(Model(spec, tuple(weights), tuple(biases)), losses)


def train(spec: NetworkSpec, data: LabeledDataset, cfg: TrainConfig) -> Model:
    return train_with_history(spec, data, cfg).model


GradientFn = Callable[[Model, np.ndarray, int], tuple[list[np.ndarray], list[np.ndarray]]]


def parameter_gradients(model: Model, case: np.ndarray, label: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic cross-entropy gradients for one labeled case."""
    x = _as_case(model, case)[None, :]
    labels = np.array([label], dtype=np.int64)
    pre, post = _forward_pass(model.weights, model.biases, model.activations, x)
    return _backward(model.weights, model.activations, x, pre, post, labels)


def gradient_check(
    model: Model,
    case: np.ndarray,
    label: int,
    epsilon: float = 1e-5,
    *,
    gradient_fn: GradientFn | None = None,
) -> float:
    """
    Max relative error between analytic and central-difference gradients.

    The error of one parameter is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    x = _as_case(model, case)[None, :]
    labels = np.array([label], dtype=np.int64)
    analytic_w, analytic_b = (gradient_fn or parameter_gradients)(model, x[0], label)

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    activations = model.activations

    def loss() -> float:
        _, post = _forward_pass(weights, biases, activations, x)
        return cross_entropy(post[-1], labels)

    worst = 0.0
    for params, grads in ((weights, analytic_w), (biases, analytic_b)):
        for param, grad in zip(params, grads):
            flat = param.reshape(-1)
            analytic = np.asarray(grad, dtype=np.float64).reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + epsilon
                plus = loss()
                flat[i] = original - epsilon
                minus = loss()
                flat[i] = original
                numeric = (plus - minus) / (2.0 * epsilon)
                worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(analytic[i])))
    return worst
