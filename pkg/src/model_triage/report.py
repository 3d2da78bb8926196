"""
The machine-readable diagnosis report and the per-case trajectory table.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from typing import Any, Iterable, Optional

from pydantic import BaseModel, Field

from . import __version__
from .footprints import (
    DEFECT_ORDER,
    RULE_DESCRIPTION,
    CaseId,
    CorrectTrend,
    DefectReport,
    DefectType,
    TrendThresholds,
    stall_layer,
    suggest_stall_layer,
)
from .injection import InjectionManifest
from .storage import dumps_document

SCHEMA_VERSION = 1

INTERPRETATION = (
    RULE_DESCRIPTION
    + " Ranks use competition ranking (ties share the better rank); "
    "rank 1 means the true class is the most likely class at that layer. "
    "The dominant defect is the one with the highest ratio, ties resolved in the order ITD, UTD, SD."
)


class CaseTrajectory(BaseModel):
    case_id: CaseId = None
    true_label: Optional[int] = None
    predicted_label: Optional[int] = None
    defect: DefectType
    ranks: list[int]
    stall_layer: int


class InjectionSummary(BaseModel):
    kind: DefectType
    itd_classes: list[int] = Field(default_factory=list)
    removed_case_count: int = 0
    utd_source: Optional[int] = None
    utd_target: Optional[int] = None
    relabeled_case_count: int = 0
    removed_layer: Optional[int] = None

    @classmethod
    def from_manifest(cls, manifest: InjectionManifest) -> "InjectionSummary":
        return cls(
            kind=manifest.kind,
            itd_classes=manifest.itd_classes,
            removed_case_count=len(manifest.removed_case_ids),
            utd_source=manifest.utd_source,
            utd_target=manifest.utd_target,
            relabeled_case_count=len(manifest.relabeled_case_ids),
            removed_layer=manifest.removed_layer,
        )


class ReportDocument(BaseModel):
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__
    config: dict[str, Any]
    layer_count: int
    base_test_accuracy: float
    probe_train_accuracy: list[float]
    test_case_count: int
    faulty_case_count: int
    no_faulty_cases: bool
    counts: dict[DefectType, int]
    ratios: dict[DefectType, float]
    dominant: Optional[DefectType]
    thresholds: TrendThresholds
    injection: Optional[InjectionSummary] = None
    by_true_class: dict[str, dict[DefectType, int]] = Field(default_factory=dict)
    correct_case_trends: Optional[dict[CorrectTrend, int]] = None
    suggested_stall_layer: Optional[int] = None
    interpretation: str = INTERPRETATION
    per_case: list[CaseTrajectory] = Field(default_factory=list)


def _by_true_class(defects: DefectReport) -> dict[str, dict[DefectType, int]]:
    table: dict[int, dict[DefectType, int]] = defaultdict(lambda: {d: 0 for d in DEFECT_ORDER})
    for case in defects.per_case:
        if case.true_label is not None:
            table[case.true_label][case.defect] += 1
    return {str(label): table[label] for label in sorted(table)}


def build_report(
    defects: DefectReport,
    *,
    config: dict[str, Any],
    layer_count: int,
    thresholds: TrendThresholds,
    base_test_accuracy: float,
    probe_train_accuracy: Iterable[float],
    test_case_count: int,
    correct_trends: Optional[dict[CorrectTrend, int]] = None,
    injection: Optional[InjectionManifest] = None,
) -> ReportDocument:
    return ReportDocument(
        config=config,
        layer_count=layer_count,
        base_test_accuracy=round(base_test_accuracy, 6),
        probe_train_accuracy=[round(value, 6) for value in probe_train_accuracy],
        test_case_count=test_case_count,
        faulty_case_count=defects.faulty_case_total,
        no_faulty_cases=not defects.has_faulty_cases,
        counts=defects.counts,
        ratios={defect: round(ratio, 3) for defect, ratio in defects.ratios.items()},
        dominant=defects.dominant,
        thresholds=thresholds,
        injection=InjectionSummary.from_manifest(injection) if injection else None,
        by_true_class=_by_true_class(defects),
        correct_case_trends=correct_trends,
        suggested_stall_layer=suggest_stall_layer(defects.per_case),
        per_case=[
            CaseTrajectory(
                case_id=case.case_id,
                true_label=case.true_label,
                predicted_label=case.predicted_label,
                defect=case.defect,
                ranks=list(case.ranks),
                stall_layer=stall_layer(case.ranks),
            )
            for case in defects.per_case
        ],
    )


def report_to_json(report: ReportDocument) -> str:
    return dumps_document(report.model_dump(mode="json"))


def report_from_json(text: str) -> ReportDocument:
    return ReportDocument.model_validate_json(text)


def trajectory_table(report: ReportDocument) -> str:
    """CSV with one row per faulty case: ids, defect, stall layer and rv_1..rv_n."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["case_id", "true_label", "predicted_label", "defect", "stall_layer"]
        + [f"rv_{j}" for j in range(1, report.layer_count + 1)]
    )
    for case in report.per_case:
        writer.writerow(
            [case.case_id, case.true_label, case.predicted_label, case.defect.value, case.stall_layer]
            + case.ranks
        )
    return buffer.getvalue()
