"""Per-row density pruning of fine-tuned weights with compact delta storage.

The pipeline: rank each row's fine-tuned values by their Gaussian-KDE
density, keep the k most representative, reset the rest to the pre-trained
values, then store just the retained values plus a position bitmask.
Injecting that delta onto the pre-trained snapshot rebuilds the optimized
model bit-exactly.
"""

from .bench import (
    BenchConfig,
    BenchRecord,
    BenchReport,
    SyntheticTask,
    TinyModel,
    f1_weighted,
    generate_task,
    reference_models,
    run_reference_bench,
    run_sweep,
    train,
)
from .delta import (
    DeltaContainer,
    DeltaEntry,
    extract_delta,
    inject,
    load_delta,
    payload_sizes,
    save_delta,
)
from .errors import (
    BadMagic,
    BaseMismatch,
    ChecksumMismatch,
    CorruptMask,
    DecompressError,
    DivergedLoss,
    EmptyInput,
    FormatError,
    IncompatiblePair,
    KenError,
    LengthMismatch,
    MaskShapeMismatch,
    NonFiniteValue,
    PatternMatchesNothing,
    RowTooShort,
    ShapeMismatch,
    TruncatedFile,
    UnknownMatrix,
    UnsupportedVersion,
)
from .kde import RowSelection, bandwidth_scott, kde_density, select_top_k_row
from .pruner import (
    MatrixStats,
    PruneConfig,
    PruneStats,
    apply_masks,
    optimize_matrix,
    optimize_row,
    prune_snapshot,
    reset_stats,
)
from .reference import run_selection_selfcheck
from .tensor_store import (
    ModelSnapshot,
    PairReport,
    WeightMatrix,
    load_snapshot,
    save_snapshot,
    snapshot_checksum,
    validate_pair,
)
from .viz import (
    NeighborGrid,
    neighbor_counts,
    neighbor_pixels,
    render_layerwise,
    render_neighbor_view,
    render_single_matrix,
    single_matrix_pixels,
    write_pgm,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagic",
    "BaseMismatch",
    "BenchConfig",
    "BenchRecord",
    "BenchReport",
    "ChecksumMismatch",
    "CorruptMask",
    "DecompressError",
    "DeltaContainer",
    "DeltaEntry",
    "DivergedLoss",
    "EmptyInput",
    "FormatError",
    "IncompatiblePair",
    "KenError",
    "LengthMismatch",
    "MaskShapeMismatch",
    "MatrixStats",
    "ModelSnapshot",
    "NeighborGrid",
    "NonFiniteValue",
    "PairReport",
    "PatternMatchesNothing",
    "PruneConfig",
    "PruneStats",
    "RowSelection",
    "RowTooShort",
    "ShapeMismatch",
    "SyntheticTask",
    "TinyModel",
    "TruncatedFile",
    "UnknownMatrix",
    "UnsupportedVersion",
    "WeightMatrix",
    "apply_masks",
    "bandwidth_scott",
    "extract_delta",
    "f1_weighted",
    "generate_task",
    "inject",
    "kde_density",
    "load_delta",
    "load_snapshot",
    "neighbor_counts",
    "neighbor_pixels",
    "optimize_matrix",
    "optimize_row",
    "payload_sizes",
    "prune_snapshot",
    "reference_models",
    "render_layerwise",
    "render_neighbor_view",
    "render_single_matrix",
    "reset_stats",
    "run_reference_bench",
    "run_selection_selfcheck",
    "run_sweep",
    "save_delta",
    "save_snapshot",
    "select_top_k_row",
    "single_matrix_pixels",
    "snapshot_checksum",
    "train",
    "validate_pair",
    "write_pgm",
]
