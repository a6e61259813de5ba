"""EdgeConv dynamic-graph point-cloud classifier: engine and profiler."""

__version__ = "0.1.0"

from .errors import (BadMagicError, ConfigError, DegenerateCloudError,
                     EdgeprofError, FormatError, FormatVersionError,
                     GraphError, IndexRangeError, ShapeError,
                     TruncatedFileError)
from .tensor import Rng, gather_rows, matmul, reduce_max_axis, tensor
from .knn import KnnGraph, knn_bytes, knn_graph, pairwise_sq_distances
from .layers import (BatchNormParams, LayerParams, LinearParams, MlpSpec,
                     dynamic_edgeconv, edge_features, edgeconv_update,
                     fold_batchnorm, global_max_pool, log_softmax,
                     mlp_forward, pointnet_update)
from .formats import (PointCloud, normalize, read_ecw, read_pcf, synth_cloud,
                      write_ecw, write_pcf)
from .model import (ForwardTrace, ModelConfig, WeightStore, config_from_text,
                    config_to_text, count_knn_invocations, forward,
                    random_weights)
from .profiler import (BenchPlan, MemoryReport, ProfileReport, bench,
                       compare_variants, memory_report, sweep_k)

__all__ = [
    "BadMagicError", "BatchNormParams", "BenchPlan", "ConfigError",
    "DegenerateCloudError", "EdgeprofError", "FormatError",
    "FormatVersionError", "ForwardTrace", "GraphError", "IndexRangeError",
    "KnnGraph", "LayerParams", "LinearParams", "MemoryReport", "MlpSpec",
    "ModelConfig", "PointCloud", "ProfileReport", "Rng", "ShapeError",
    "TruncatedFileError", "WeightStore", "bench", "compare_variants",
    "config_from_text", "config_to_text", "count_knn_invocations",
    "dynamic_edgeconv", "edge_features", "edgeconv_update", "fold_batchnorm",
    "forward", "gather_rows", "global_max_pool", "knn_bytes", "knn_graph",
    "log_softmax", "matmul", "memory_report", "mlp_forward", "normalize",
    "pairwise_sq_distances", "pointnet_update", "random_weights", "read_ecw",
    "read_pcf", "reduce_max_axis", "synth_cloud", "sweep_k", "tensor",
    "write_ecw", "write_pcf",
]
