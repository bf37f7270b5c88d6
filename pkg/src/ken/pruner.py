"""Keep-or-reset pruning over rows, matrices, and whole snapshots.

Every output entry is either the fine-tuned value (column selected by the
per-row density ranking) or the pre-trained value (everything else) - the
rule is binary, so outputs are bit-exact mixtures of the two inputs.
Selection looks only at the fine-tuned row.
"""

from __future__ import annotations

import fnmatch
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    IncompatiblePair,
    LengthMismatch,
    MaskShapeMismatch,
    ShapeMismatch,
)
from .kde import select_top_k_row
from .tensor_store import ModelSnapshot, WeightMatrix, validate_pair


@dataclass(frozen=True)
class PruneConfig:
    """What to prune: uniform per-row k plus optional name/order filters.

    `matrix_filter` is a list of name globs (any match counts);
    `layer_range` is an inclusive (lo, hi) over snapshot matrix order.
    With both present a matrix must satisfy both.
    """

    k: int
    matrix_filter: tuple[str, ...] | None = None
    layer_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")
        if self.matrix_filter is not None:
            object.__setattr__(self, "matrix_filter", tuple(self.matrix_filter))
        if self.layer_range is not None:
            lo, hi = self.layer_range
            if lo > hi:
                raise ValueError(f"layer range lo {lo} > hi {hi}")
            object.__setattr__(self, "layer_range", (int(lo), int(hi)))

    def selects(self, index: int, name: str) -> bool:
        """Whether the matrix at `index` named `name` falls inside the filter."""
        if self.layer_range is not None:
            lo, hi = self.layer_range
            if not lo <= index <= hi:
                return False
        if self.matrix_filter is not None:
            return any(fnmatch.fnmatchcase(name, pat) for pat in self.matrix_filter)
        return True


@dataclass(frozen=True)
class MatrixStats:
    """Retention accounting for one matrix."""

    name: str
    retained: int
    total: int

    @property
    def reset_fraction(self) -> float:
        return 1.0 - self.retained / self.total

    @property
    def reset_percent(self) -> str:
        """Reset fraction as a percentage string with two decimals."""
        return f"{self.reset_fraction * 100.0:.2f}"


@dataclass(frozen=True)
class PruneStats:
    """Per-matrix retention figures plus totals over the pruned matrices."""

    per_matrix: tuple[MatrixStats, ...]

    @property
    def retained(self) -> int:
        return sum(s.retained for s in self.per_matrix)

    @property
    def total(self) -> int:
        return sum(s.total for s in self.per_matrix)

    @property
    def reset_fraction(self) -> float:
        if self.total == 0:
            return 0.0
        return 1.0 - self.retained / self.total

    @property
    def reset_percent(self) -> str:
        return f"{self.reset_fraction * 100.0:.2f}"


def optimize_row(pre_row, fine_row, k: int) -> np.ndarray:
    """Keep the k density-selected entries of `fine_row`, reset the rest.

    output[j] = fine_row[j] when j is selected, else pre_row[j].  Selection
    depends on the fine-tuned row only.
    """
    pre = np.asarray(pre_row)
    fine = np.asarray(fine_row)
    if pre.shape != fine.shape or pre.ndim != 1:
        raise LengthMismatch(f"rows differ in length: {pre.shape} vs {fine.shape}")
    sel = select_top_k_row(fine, k).indices
    out = pre.copy()
    out[sel] = fine[sel]
    return out


def selection_mask(matrix: WeightMatrix, k: int) -> np.ndarray:
    """Boolean mask of density-selected positions, min(k, cols) per row."""
    mask = np.zeros(matrix.shape, dtype=bool)
    for i in range(matrix.rows):
        mask[i, select_top_k_row(matrix.data[i], k).indices] = True
    return mask


def apply_mask(pre: WeightMatrix, fine: WeightMatrix, mask: np.ndarray) -> WeightMatrix:
    """Mix two matrices: fine where mask is set, pre elsewhere (bit-exact)."""
    if pre.shape != fine.shape:
        raise ShapeMismatch(
            f"matrix {fine.name!r}: shapes {pre.shape} vs {fine.shape} differ"
        )
    if mask.shape != fine.shape or mask.dtype != np.bool_:
        raise MaskShapeMismatch(
            f"matrix {fine.name!r}: mask shape {mask.shape} does not match {fine.shape}"
        )
    return WeightMatrix(fine.name, np.where(mask, fine.data, pre.data))


def optimize_matrix(
    pre: WeightMatrix, fine: WeightMatrix, k: int
) -> tuple[WeightMatrix, np.ndarray]:
    """Row-wise keep-or-reset over one matrix; returns the result and its mask."""
    if pre.shape != fine.shape:
        raise ShapeMismatch(
            f"matrix {fine.name!r}: shapes {pre.shape} vs {fine.shape} differ"
        )
    mask = selection_mask(fine, k)
    return apply_mask(pre, fine, mask), mask


def apply_masks(
    pre: ModelSnapshot, fine: ModelSnapshot, masks: dict[str, np.ndarray]
) -> ModelSnapshot:
    """Mix a compatible snapshot pair under the given per-matrix masks.

    Matrices without a mask pass through as fine-tuned.  Used by the pruner
    itself and by the benchmark's random-selection baseline.
    """
    report = validate_pair(pre, fine)
    if not report.ok:
        raise IncompatiblePair(str(report))
    out = []
    for p, f in zip(pre, fine):
        out.append(apply_mask(p, f, masks[f.name]) if f.name in masks else f)
    return ModelSnapshot(tuple(out))


def prune_snapshot(
    pre: ModelSnapshot,
    fine: ModelSnapshot,
    cfg: PruneConfig,
    threads: int = 1,
) -> tuple[ModelSnapshot, dict[str, np.ndarray], PruneStats]:
    """Density-prune the matrices selected by `cfg`, pass the rest through.

    Returns the optimized snapshot, the masks for the pruned matrices (keyed
    by name, in snapshot order), and retention stats over those matrices.
    Matrices outside the filter are copied from `fine` unchanged and do not
    appear in the masks or the stats.  Output is identical for any thread
    count.
    """
    report = validate_pair(pre, fine)
    if not report.ok:
        raise IncompatiblePair(str(report))

    chosen = [i for i, f in enumerate(fine) if cfg.selects(i, f.name)]
    if threads > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            masks_in_order = list(
                pool.map(lambda i: selection_mask(fine[i], cfg.k), chosen)
            )
    else:
        masks_in_order = [selection_mask(fine[i], cfg.k) for i in chosen]

    masks = {fine[i].name: m for i, m in zip(chosen, masks_in_order)}
    optimized = apply_masks(pre, fine, masks)
    stats = PruneStats(
        tuple(
            MatrixStats(fine[i].name, int(m.sum()), m.size)
            for i, m in zip(chosen, masks_in_order)
        )
    )
    return optimized, masks, stats


def reset_stats(masks: dict[str, np.ndarray]) -> PruneStats:
    """Retention stats recomputed from masks alone."""
    return PruneStats(
        tuple(MatrixStats(name, int(m.sum()), m.size) for name, m in masks.items())
    )
