"""
Seeded single-defect injectors.

ITD removes a fraction of the training cases of chosen classes, UTD relabels a
fraction of one class as another, SD removes one hidden layer from the
architecture. Counts are ``floor(fraction * class size)``.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from .footprints import DefectType
from .nn import SEED_MAX, LabeledDataset, LayerSpec, NetworkSpec

logger = logging.getLogger(__name__)


class InjectionSpec(BaseModel):
    """
    One defect to inject. Unset targets are drawn from ``seed``.
    """

    model_config = ConfigDict(frozen=True)

    kind: DefectType
    seed: int = Field(default=0, ge=0, le=SEED_MAX)

    itd_classes: Optional[tuple[int, ...]] = None
    itd_class_count: PositiveInt = 3
    itd_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)

    utd_source: Optional[int] = Field(default=None, ge=0)
    utd_target: Optional[int] = Field(default=None, ge=0)
    utd_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)

    sd_layer: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _check_pair(self) -> "InjectionSpec":
        if self.utd_source is not None and self.utd_source == self.utd_target:
            raise ValueError("utd_source and utd_target must differ")
        if self.itd_classes is not None and len(set(self.itd_classes)) != len(self.itd_classes):
            raise ValueError("itd_classes must not repeat a class")
        return self


class InjectionManifest(BaseModel):
    """Exactly what an injection changed."""

    kind: DefectType
    seed: int
    itd_classes: list[int] = Field(default_factory=list)
    itd_fraction: Optional[float] = None
    removed_case_ids: list[int] = Field(default_factory=list)
    utd_source: Optional[int] = None
    utd_target: Optional[int] = None
    utd_fraction: Optional[float] = None
    relabeled_case_ids: list[int] = Field(default_factory=list)
    removed_layer: Optional[int] = None
    layer_count_before: Optional[int] = None
    layer_count_after: Optional[int] = None


def _floor_count(fraction: float, size: int) -> int:
    # round first so 0.29 * 100 counts 29 cases, not 28
    return math.floor(round(fraction * size, 9))


def _check_fraction(fraction: float) -> None:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")


def inject_itd(
    data: LabeledDataset,
    classes: Iterable[int],
    fraction: float,
    seed: int,
) -> LabeledDataset:
    """Drop ``floor(fraction * |class|)`` cases of every chosen class; survivors keep their order."""
    _check_fraction(fraction)
    rng = np.random.default_rng(seed)
    keep = np.ones(len(data), dtype=bool)
    for label in sorted(set(classes)):
        if not 0 <= label < data.class_count:
            raise ValueError(f"class {label} out of range")
        members = data.class_indices(label)
        if members.size == 0:
            raise ValueError(f"class {label} has no cases to remove")
        removed = rng.choice(members, size=_floor_count(fraction, members.size), replace=False)
        keep[removed] = False
    return data.subset(np.flatnonzero(keep))


def inject_utd(
    data: LabeledDataset,
    source: int,
    target: int,
    fraction: float,
    seed: int,
) -> LabeledDataset:
    """Relabel ``floor(fraction * |source|)`` cases of ``source`` as ``target``."""
    if source == target:
        raise ValueError("source and target classes must differ")
    _check_fraction(fraction)
    for label in (source, target):
        if not 0 <= label < data.class_count:
            raise ValueError(f"class {label} out of range")
    members = data.class_indices(source)
    if members.size == 0:
        raise ValueError(f"class {source} has no cases to relabel")
    rng = np.random.default_rng(seed)
    flipped = rng.choice(members, size=_floor_count(fraction, members.size), replace=False)
    labels = data.labels.copy()
    labels[flipped] = target
    return data.with_labels(labels)


def inject_sd(spec: NetworkSpec, layer_index: int) -> NetworkSpec:
    """
    Remove hidden layer ``layer_index`` (1-based) and re-chain the widths.

    The successor layer takes over the removed layer's input width.
    """
    if layer_index == spec.layer_count:
        raise ValueError("the output layer cannot be removed")
    if not 1 <= layer_index < spec.layer_count:
        raise ValueError(f"hidden layer {layer_index} does not exist")
    if spec.hidden_count < 2:
        raise ValueError("removing the layer would leave no hidden layer")
    layers = list(spec.layers)
    removed = layers.pop(layer_index - 1)
    successor = layers[layer_index - 1]
    layers[layer_index - 1] = LayerSpec(
        kind=successor.kind,
        input_width=removed.input_width,
        output_width=successor.output_width,
        activation=successor.activation,
    )
    return NetworkSpec(layers=tuple(layers), class_count=spec.class_count)


def resolve(spec: InjectionSpec, class_count: int, network: NetworkSpec) -> InjectionSpec:
    """Fill in the unset targets of ``spec`` from its seed."""
    rng = np.random.default_rng([spec.seed, 0xD1CE])
    updates: dict = {}
    if spec.kind is DefectType.ITD and spec.itd_classes is None:
        if spec.itd_class_count > class_count:
            raise ValueError(f"cannot pick {spec.itd_class_count} of {class_count} classes")
        chosen = rng.choice(class_count, size=spec.itd_class_count, replace=False)
        updates["itd_classes"] = tuple(sorted(int(c) for c in chosen))
    if spec.kind is DefectType.UTD:
        source = spec.utd_source
        if source is None:
            candidates = [c for c in range(class_count) if c != spec.utd_target]
            source = int(rng.choice(candidates))
        target = spec.utd_target
        if target is None:
            target = int(rng.choice([c for c in range(class_count) if c != source]))
        updates.update(utd_source=source, utd_target=target)
    if spec.kind is DefectType.SD and spec.sd_layer is None:
        updates["sd_layer"] = int(rng.integers(1, network.hidden_count + 1))
    return spec.model_copy(update=updates) if updates else spec


def apply_injection(
    spec: InjectionSpec,
    data: LabeledDataset,
    network: NetworkSpec,
) -> tuple[LabeledDataset, NetworkSpec, InjectionManifest]:
    """Apply one injection and record exactly which cases or layer it touched."""
    spec = resolve(spec, data.class_count, network)
    manifest = InjectionManifest(kind=spec.kind, seed=spec.seed)

    if spec.kind is DefectType.ITD:
        injected = inject_itd(data, spec.itd_classes, spec.itd_fraction, spec.seed)
        removed = np.setdiff1d(data.case_ids, injected.case_ids)
        manifest = manifest.model_copy(
            update={
                "itd_classes": list(spec.itd_classes),
                "itd_fraction": spec.itd_fraction,
                "removed_case_ids": [int(c) for c in removed],
            }
        )
        logger.info("ITD: removed %d cases from classes %s", removed.size, list(spec.itd_classes))
        return injected, network, manifest

    if spec.kind is DefectType.UTD:
        injected = inject_utd(data, spec.utd_source, spec.utd_target, spec.utd_fraction, spec.seed)
        changed = data.case_ids[injected.labels != data.labels]
        manifest = manifest.model_copy(
            update={
                "utd_source": spec.utd_source,
                "utd_target": spec.utd_target,
                "utd_fraction": spec.utd_fraction,
                "relabeled_case_ids": [int(c) for c in changed],
            }
        )
        logger.info(
            "UTD: relabeled %d cases %d -> %d", changed.size, spec.utd_source, spec.utd_target
        )
        return injected, network, manifest

    reduced = inject_sd(network, spec.sd_layer)
    manifest = manifest.model_copy(
        update={
            "removed_layer": spec.sd_layer,
            "layer_count_before": network.layer_count,
            "layer_count_after": reduced.layer_count,
        }
    )
    logger.info("SD: removed hidden layer %d", spec.sd_layer)
    return data, reduced, manifest
