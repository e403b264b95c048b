"""Node classification with decoupled graph propagation, and a benchmark harness
for studying how the observed-nodes-to-features ratio shapes model choice."""

from .data import (
    Dataset,
    SketchConfig,
    Split,
    generate_synthetic,
    load_dataset,
    save_dataset,
    sketch_features,
    split_fraction,
    split_per_class,
)
from .estimators import GraphNodeClassifier, GraphPropagation, RandomFeatureSketch
from .graph import (
    NormalizedAdjacency,
    SparseGraph,
    degrees,
    from_edge_list,
    normalize_with_self_loops,
    ppr_exact_dense,
    propagate_power,
    propagate_ppr,
    spmm,
)
from .models import ModelSpec, TrainResult, evaluate_accuracy, train_model
from .nn import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GraphNodeClassifier",
    "GraphPropagation",
    "ModelSpec",
    "NormalizedAdjacency",
    "RandomFeatureSketch",
    "SketchConfig",
    "SparseGraph",
    "Split",
    "TrainConfig",
    "TrainResult",
    "degrees",
    "evaluate_accuracy",
    "from_edge_list",
    "generate_synthetic",
    "load_dataset",
    "normalize_with_self_loops",
    "ppr_exact_dense",
    "propagate_power",
    "propagate_ppr",
    "save_dataset",
    "sketch_features",
    "spmm",
    "split_fraction",
    "split_per_class",
    "train_model",
]
