"""
Model Triage Engine - locate why a classifier misclassifies, layer by layer.
"""

__version__ = "1.0.0"

from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    ProbeStateError,
    ShapeError,
    StructureError,
)
from .nn import (
    Activation,
    LabeledDataset,
    LayerSpec,
    Model,
    NetworkSpec,
    TrainConfig,
    forward_capture,
    gradient_check,
    layer_forward,
    predict,
    softmax,
    train,
)
from .probes import (
    FootprintSpecifics,
    InstrumentedModel,
    extract_dfs,
    extract_faulty_dfs,
    instrument,
    train_probes,
)
from .footprints import (
    DefectReport,
    DefectType,
    TrendThresholds,
    ValueRankList,
    aggregate,
    classify_trend,
    default_thresholds,
    stall_layer,
    value_rank,
    value_rank_list,
)
from .injection import InjectionSpec, inject_itd, inject_sd, inject_utd
from .dataio import SyntheticSpec, generate_synthetic, load_delimited, load_idx
from .cli import main

__all__ = [
    "ConfigError",
    "DivergenceError",
    "FormatError",
    "ProbeStateError",
    "ShapeError",
    "StructureError",
    "Activation",
    "LabeledDataset",
    "LayerSpec",
    "Model",
    "NetworkSpec",
    "TrainConfig",
    "forward_capture",
    "gradient_check",
    "layer_forward",
    "predict",
    "softmax",
    "train",
    "FootprintSpecifics",
    "InstrumentedModel",
    "extract_dfs",
    "extract_faulty_dfs",
    "instrument",
    "train_probes",
    "DefectReport",
    "DefectType",
    "TrendThresholds",
    "ValueRankList",
    "aggregate",
    "classify_trend",
    "default_thresholds",
    "stall_layer",
    "value_rank",
    "value_rank_list",
    "InjectionSpec",
    "inject_itd",
    "inject_sd",
    "inject_utd",
    "SyntheticSpec",
    "generate_synthetic",
    "load_delimited",
    "load_idx",
    "main",
]
