"""
Value-rank trajectories and defect classification.

A value-rank is the competition rank of the true class's likelihood at one
layer (1 = most likely, ties share the better rank). Improvement means the
numeric rank decreases from one layer to the next.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt

from .probes import FootprintSpecifics

logger = logging.getLogger(__name__)

# integer ids from datasets, anything else is kept as its text
CaseId = Optional[Union[int, str]]


class DefectType(str, Enum):
    # declaration order is the dominant-defect tie-break order
    ITD = "ITD"
    UTD = "UTD"
    SD = "SD"


DEFECT_ORDER: tuple[DefectType, ...] = tuple(DefectType)


class CorrectTrend(str, Enum):
    STABLE = "stable"
    CONVERGING = "converging"


RULE_DESCRIPTION = (
    "A = number of consecutive layer pairs where the value-rank improves (decreases), "
    "D = number where it worsens (increases). "
    "UTD if A < t_a and D >= t_d; SD if A >= t_a and D < t_d; "
    "ITD otherwise (flat or oscillating). "
    "This pair-count rule is one concrete reading of the trend descriptions "
    "(ascending without reaching rank 1, descending, constant or oscillating)."
)


class TrendThresholds(BaseModel):
    model_config = ConfigDict(frozen=True)

    ascend: PositiveInt
    descend: PositiveInt

    @classmethod
    def parse(cls, text: str) -> "TrendThresholds":
        """Parse ``"t_a,t_d"``."""
        parts = [part.strip() for part in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"thresholds must look like 't_a,t_d', got {text!r}")
        return cls(ascend=int(parts[0]), descend=int(parts[1]))


@dataclass(frozen=True)
class ValueRankList:
    ranks: tuple[int, ...]
    true_label: int
    case_id: Hashable = None

    @property
    def final_rank(self) -> int:
        return self.ranks[-1]

    def __len__(self) -> int:
        return len(self.ranks)


class CaseDiagnosis(BaseModel):
    model_config = ConfigDict(frozen=True)

    case_id: CaseId = None
    defect: DefectType
    ranks: tuple[int, ...]
    true_label: int | None = None
    predicted_label: int | None = None


class DefectReport(BaseModel):
    counts: dict[DefectType, int]
    ratios: dict[DefectType, float]
    dominant: DefectType | None
    faulty_case_total: int
    per_case: list[CaseDiagnosis]

    @property
    def has_faulty_cases(self) -> bool:
        return self.faulty_case_total > 0


def value_rank(likelihoods: Sequence[float] | np.ndarray, true_class: int) -> int:
    """1 + number of classes strictly more likely than ``true_class``."""
    values = np.asarray(likelihoods, dtype=np.float64).reshape(-1)
    if not 0 <= true_class < values.size:
        raise ValueError(f"class index {true_class} out of range for {values.size} classes")
    return 1 + int(np.count_nonzero(values > values[true_class]))


def value_rank_list(dfs: FootprintSpecifics) -> ValueRankList:
    ranks = tuple(value_rank(s, dfs.true_label) for s in dfs.per_layer_likelihoods)
    return ValueRankList(ranks, dfs.true_label, dfs.source_case_id)


def _ranks_of(ranks: ValueRankList | Sequence[int]) -> tuple[int, ...]:
    return ranks.ranks if isinstance(ranks, ValueRankList) else tuple(int(r) for r in ranks)


def trend_counts(ranks: ValueRankList | Sequence[int]) -> tuple[int, int]:
    """(improving pairs, worsening pairs) over consecutive layers."""
    values = _ranks_of(ranks)
    pairs = list(zip(values, values[1:]))
    improving = sum(1 for before, after in pairs if after < before)
    worsening = sum(1 for before, after in pairs if after > before)
    return improving, worsening


def classify_trend(ranks: ValueRankList | Sequence[int], th: TrendThresholds) -> DefectType:
    values = _ranks_of(ranks)
    if not values:
        raise ValueError("empty value-rank list")
    if values[-1] == 1:
        raise ValueError("the case is classified correctly; only faulty cases have a defect trend")
    improving, worsening = trend_counts(values)
    ascending = improving >= th.ascend
    descending = worsening >= th.descend
    if descending and not ascending:
        return DefectType.UTD
    if ascending and not descending:
        return DefectType.SD
    return DefectType.ITD


def classify_correct_trend(ranks: ValueRankList | Sequence[int]) -> CorrectTrend:
    values = _ranks_of(ranks)
    if not values or values[-1] != 1:
        raise ValueError("the case is misclassified; use classify_trend")
    return CorrectTrend.STABLE if all(r == 1 for r in values) else CorrectTrend.CONVERGING


def default_thresholds(layer_count: int) -> TrendThresholds:
    """ceil(0.2 * n), at least 1, for both thresholds."""
    if layer_count < 2:
        raise ValueError("threshold defaults need at least two layers")
    value = max(1, -(-layer_count // 5))
    return TrendThresholds(ascend=value, descend=value)


def aggregate(per_case: Iterable[CaseDiagnosis]) -> DefectReport:
    cases = list(per_case)
    total = len(cases)
    tally = Counter(case.defect for case in cases)
    counts = {defect: tally.get(defect, 0) for defect in DEFECT_ORDER}
    if total == 0:
        return DefectReport(
            counts=counts,
            ratios={defect: 0.0 for defect in DEFECT_ORDER},
            dominant=None,
            faulty_case_total=0,
            per_case=[],
        )
    ratios = {defect: counts[defect] / total for defect in DEFECT_ORDER}
    # max keeps the first maximal entry, so DEFECT_ORDER breaks ties
    dominant = max(DEFECT_ORDER, key=lambda defect: counts[defect])
    return DefectReport(
        counts=counts,
        ratios=ratios,
        dominant=dominant,
        faulty_case_total=total,
        per_case=cases,
    )


def stall_layer(ranks: ValueRankList | Sequence[int]) -> int:
    """
    1-based hidden layer after which the value-rank stops improving.

    Capped at n - 1, the last hidden layer.
    """
    values = _ranks_of(ranks)
    if len(values) < 2:
        raise ValueError("a stall layer needs at least two layers")
    stall = 1
    for index in range(1, len(values)):
        if values[index] < values[index - 1]:
            stall = index + 1
    return min(stall, len(values) - 1)


def suggest_stall_layer(per_case: Iterable[CaseDiagnosis]) -> int | None:
    """Most frequent stall layer among SD cases; ties go to the lowest layer."""
    layers = Counter(stall_layer(case.ranks) for case in per_case if case.defect is DefectType.SD)
    if not layers:
        return None
    return min(layers, key=lambda layer: (-layers[layer], layer))


def _case_id(value: Hashable) -> CaseId:
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    return str(value)


def diagnose(dfs_list: Iterable[FootprintSpecifics], th: TrendThresholds) -> DefectReport:
    """value_rank_list -> classify_trend -> aggregate over faulty footprints."""
    cases = []
    for dfs in dfs_list:
        ranks = value_rank_list(dfs)
        cases.append(
            CaseDiagnosis(
                case_id=_case_id(dfs.source_case_id),
                defect=classify_trend(ranks, th),
                ranks=ranks.ranks,
                true_label=dfs.true_label,
                predicted_label=dfs.predicted_label,
            )
        )
    report = aggregate(cases)
    logger.info(
        "classified %d faulty cases, dominant defect %s",
        report.faulty_case_total,
        report.dominant.value if report.dominant else "none",
    )
    return report
