"""Structured compression of a minimal decoder-only transformer.

The pipeline: convert LayerNorm networks to RMSNorm form, rotate each block
into its principal-component basis, slice the embedding dimension with
deletion matrices, then verify and benchmark the result.
"""

from .errors import (
    CalibrationError,
    CheckpointError,
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    DtypeMismatchError,
    InvalidRotationError,
    InvalidSpecError,
    MalformedHeaderError,
    MissingTensorError,
    ShapeError,
    SliceKitError,
    StateError,
    TruncatedPayloadError,
    UnknownTensorError,
    VocabularyError,
)
from .linalg import (
    EigenDecomposition,
    eigh_descending,
    frobenius_norm,
    is_orthogonal,
    matmul,
    mean_subtraction_matrix,
    random_orthogonal,
    transpose,
)
from .model import (
    BlockWeights,
    ModelConfig,
    NormParams,
    TransformerModel,
    boundary_signal,
    forward,
    layernorm_rows,
    models_equal,
    multi_head_attention,
    random_model,
    rmsnorm_rows,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .invariance import RotationSet, apply_rotation, convert_to_rmsnorm, max_logit_divergence
from .slicer import (
    CovarianceStats,
    SliceSpec,
    boundary_reconstruction_error,
    calibrate,
    choose_dims,
    slice_model,
    slicing_report,
    write_slicing_report,
)
from .evalbench import (
    BenchRow,
    PerplexityReport,
    bench_layer_matmuls,
    export_spectrum,
    perplexity,
    write_bench_csv,
)

__version__ = "0.1.0"
