"""
Binary containers for models, instrumented models and datasets.

All headers and numbers are little-endian; parameters are float64 in layer
order, row-major.

MSC1  magic, u32 class_count, u32 layer_count,
      per layer (u8 kind, u32 input_width, u32 output_width, u8 activation),
      then per layer W then B.
PRB1  follows an MSC1 block: magic, u32 probe_count,
      per probe (u32 layer_index, W, B), then a u8 trained flag;
      probe shapes follow from the base.
DSC1  magic, u32 class_count, u64 case_count, u32 width,
      inputs (f64), labels (i64), case_ids (i64).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn import Activation, LabeledDataset, LayerKind, LayerSpec, Model, NetworkSpec
from .probes import InstrumentedModel, Probe

MODEL_MAGIC = b"MSC1"
PROBE_MAGIC = b"PRB1"
DATASET_MAGIC = b"DSC1"

_KIND_CODES = {LayerKind.DENSE: 0}
_ACTIVATION_CODES = {Activation.RELU: 0, Activation.SOFTMAX: 1, Activation.IDENTITY: 2}
_KINDS = {code: kind for kind, code in _KIND_CODES.items()}
_ACTIVATIONS = {code: activation for activation, code in _ACTIVATION_CODES.items()}

_F64 = np.dtype("<f8")
_I64 = np.dtype("<i8")


class _Reader:
    """Cursor over a byte buffer that reports the failing offset."""

    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.offset = 0
        self.source = source

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.raw):
            raise FormatError(f"{self.source}: truncated while reading {what}", offset=self.offset)
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def magic(self, expected: bytes) -> None:
        start = self.offset
        found = self.take(len(expected), "magic")
        if found != expected:
            raise FormatError(f"{self.source}: expected {expected!r}, found {found!r}", offset=start)

    def array(self, dtype: np.dtype, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        chunk = self.take(count * dtype.itemsize, what)
        return np.frombuffer(chunk, dtype=dtype).astype(dtype.newbyteorder("="), copy=True).reshape(shape)

    def finish(self) -> None:
        if self.offset != len(self.raw):
            raise FormatError(f"{self.source}: unexpected trailing bytes", offset=self.offset)


def _f64(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_F64).tobytes()


def model_to_bytes(model: Model) -> bytes:
    spec = model.spec
    parts = [MODEL_MAGIC, struct.pack("<II", spec.class_count, spec.layer_count)]
    for layer in spec.layers:
        parts.append(
            struct.pack(
                "<BIIB",
                _KIND_CODES[layer.kind],
                layer.input_width,
                layer.output_width,
                _ACTIVATION_CODES[layer.activation],
            )
        )
    for weights, bias in zip(model.weights, model.biases):
        parts.append(_f64(weights))
        parts.append(_f64(bias))
    return b"".join(parts)


def _read_model(reader: _Reader) -> Model:
    reader.magic(MODEL_MAGIC)
    class_count, layer_count = reader.unpack("<II", "model header")
    layers = []
    for j in range(layer_count):
        start = reader.offset
        kind, fan_in, fan_out, activation = reader.unpack("<BIIB", f"layer {j} header")
        if kind not in _KINDS or activation not in _ACTIVATIONS:
            raise FormatError(f"{reader.source}: unknown layer code in layer {j}", offset=start)
        layers.append(
            LayerSpec(
                kind=_KINDS[kind],
                input_width=fan_in,
                output_width=fan_out,
                activation=_ACTIVATIONS[activation],
            )
        )
    try:
        spec = NetworkSpec(layers=tuple(layers), class_count=class_count)
    except ValueError as exc:
        raise FormatError(f"{reader.source}: invalid network structure: {exc}", offset=reader.offset) from exc
    weights, biases = [], []
    for j, layer in enumerate(spec.layers):
        weights.append(reader.array(_F64, (layer.output_width, layer.input_width), f"layer {j} weights"))
        biases.append(reader.array(_F64, (layer.output_width,), f"layer {j} bias"))
    return Model(spec, tuple(weights), tuple(biases))


def model_from_bytes(raw: bytes, source: str = "model") -> Model:
    reader = _Reader(raw, source)
    model = _read_model(reader)
    reader.finish()
    return model


def instrumented_to_bytes(im: InstrumentedModel) -> bytes:
    parts = [
        model_to_bytes(im.base),
        PROBE_MAGIC,
        struct.pack("<I", len(im.probes)),
    ]
    for probe in im.probes:
        parts.append(struct.pack("<I", probe.layer_index))
        parts.append(_f64(probe.weights))
        parts.append(_f64(probe.biases))
    parts.append(struct.pack("<B", int(im.trained)))
    return b"".join(parts)


def instrumented_from_bytes(raw: bytes, source: str = "instrumented model") -> InstrumentedModel:
    reader = _Reader(raw, source)
    base = _read_model(reader)
    reader.magic(PROBE_MAGIC)
    (probe_count,) = reader.unpack("<I", "probe count")
    class_count = base.spec.class_count
    probes = []
    for _ in range(probe_count):
        start = reader.offset
        (layer_index,) = reader.unpack("<I", "probe layer index")
        if not 1 <= layer_index <= base.spec.hidden_count:
            raise FormatError(f"{source}: probe for non-hidden layer {layer_index}", offset=start)
        width = base.spec.layers[layer_index - 1].output_width
        weights = reader.array(_F64, (class_count, width), f"probe {layer_index} weights")
        biases = reader.array(_F64, (class_count,), f"probe {layer_index} bias")
        probes.append(Probe(layer_index, weights, biases))
    (trained,) = reader.unpack("<B", "trained flag")
    reader.finish()
    return InstrumentedModel(base, tuple(probes), trained=bool(trained))


def dataset_to_bytes(data: LabeledDataset) -> bytes:
    header = DATASET_MAGIC + struct.pack("<IQI", data.class_count, len(data), data.width)
    return b"".join(
        [
            header,
            _f64(data.inputs),
            np.ascontiguousarray(data.labels, dtype=_I64).tobytes(),
            np.ascontiguousarray(data.case_ids, dtype=_I64).tobytes(),
        ]
    )


def dataset_from_bytes(raw: bytes, source: str = "dataset") -> LabeledDataset:
    reader = _Reader(raw, source)
    reader.magic(DATASET_MAGIC)
    class_count, count, width = reader.unpack("<IQI", "dataset header")
    inputs = reader.array(_F64, (count, width), "inputs")
    labels = reader.array(_I64, (count,), "labels")
    case_ids = reader.array(_I64, (count,), "case ids")
    reader.finish()
    try:
        return LabeledDataset(inputs, labels, class_count, case_ids)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}", offset=0) from exc


def save_model(model: Model, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(model_to_bytes(model))
    return path


def load_model(path: str | Path) -> Model:
    path = Path(path)
    return model_from_bytes(path.read_bytes(), path.name)


def save_instrumented(im: InstrumentedModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(instrumented_to_bytes(im))
    return path


def load_instrumented(path: str | Path) -> InstrumentedModel:
    path = Path(path)
    return instrumented_from_bytes(path.read_bytes(), path.name)


def save_dataset(data: LabeledDataset, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(dataset_to_bytes(data))
    return path


def load_dataset(path: str | Path) -> LabeledDataset:
    path = Path(path)
    return dataset_from_bytes(path.read_bytes(), path.name)
