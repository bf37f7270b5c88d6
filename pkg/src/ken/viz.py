"""Deterministic PGM views of pruned matrices and their selection masks.

Three views: a single-matrix magnitude map (pruned cells blank), a
4-neighborhood retained-neighbor count map, and a layer-wise sweep that
writes one single-matrix image per matching matrix.  Output is binary PGM
(P5) so files are byte-identical across runs without any codec dependency.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path

import numpy as np

from .errors import MaskShapeMismatch, PatternMatchesNothing
from .tensor_store import ModelSnapshot, WeightMatrix


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a grayscale image as binary PGM: P5 header plus raw bytes."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError(f"pixels must be 2-D, got shape {pixels.shape}")
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def single_matrix_pixels(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Magnitude map of retained values; pruned cells are white (255).

    Retained pixels are 254 * (1 - |v| / maxabs) rounded half-up, with
    maxabs taken over retained values only, so the largest magnitude is
    black.  When all retained values are zero they render as 0.
    """
    data = np.asarray(data)
    mask = np.asarray(mask, dtype=bool)
    if data.shape != mask.shape:
        raise MaskShapeMismatch(
            f"mask shape {mask.shape} does not match data shape {data.shape}"
        )
    pixels = np.full(data.shape, 255, dtype=np.uint8)
    if not mask.any():
        return pixels
    mag = np.abs(data[mask]).astype(np.float64)
    maxabs = mag.max()
    if maxabs == 0.0:
        pixels[mask] = 0
    else:
        pixels[mask] = np.floor(254.0 * (1.0 - mag / maxabs) + 0.5).astype(np.uint8)
    return pixels


def render_single_matrix(matrix: WeightMatrix, mask: np.ndarray, path) -> None:
    """Write the single-matrix view of one pruned matrix to `path`."""
    write_pgm(path, single_matrix_pixels(matrix.data, mask))


@dataclass(frozen=True, eq=False)
class NeighborGrid:
    """Retained-neighbor counts per cell: 0..4, and 0 for non-retained cells."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.uint8)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def cols(self) -> int:
        return self.counts.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, NeighborGrid):
            return NotImplemented
        return self.counts.shape == other.counts.shape and bool(
            np.array_equal(self.counts, other.counts)
        )


def neighbor_counts(mask: np.ndarray) -> NeighborGrid:
    """Count retained up/down/left/right neighbors of each retained cell.

    Diagonals are excluded; cells outside the grid contribute nothing, so
    borders naturally max out below 4.  Non-retained cells count 0.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise MaskShapeMismatch(f"mask must be 2-D, got shape {mask.shape}")
    m = mask.astype(np.uint8)
    counts = np.zeros(mask.shape, dtype=np.uint8)
    counts[1:, :] += m[:-1, :]
    counts[:-1, :] += m[1:, :]
    counts[:, 1:] += m[:, :-1]
    counts[:, :-1] += m[:, 1:]
    counts[~mask] = 0
    return NeighborGrid(counts)


def neighbor_pixels(grid: NeighborGrid) -> np.ndarray:
    """Pixel map 255 - 51*count: counts 0..4 render 255,204,153,102,51."""
    return (255 - 51 * grid.counts.astype(np.int16)).astype(np.uint8)


def render_neighbor_view(grid: NeighborGrid, path) -> None:
    """Write the neighbor-count view to `path`."""
    write_pgm(path, neighbor_pixels(grid))


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def _sanitize(name: str) -> str:
    return _UNSAFE.sub("_", name)


def render_layerwise(
    snapshot: ModelSnapshot,
    masks: dict[str, np.ndarray],
    pattern: str,
    out_dir,
    threads: int = 1,
) -> list[str]:
    """Write one single-matrix image per matrix matching `pattern`.

    Matching runs over matrices that have a mask, in snapshot order; each
    file is named ``<seq>_<sanitized-name>.pgm`` with a zero-padded
    sequence prefix.  Returns the written paths.  Raises
    PatternMatchesNothing when no masked matrix matches.  Images are
    independent, so any thread count writes identical bytes.
    """
    matched = [
        m for m in snapshot if m.name in masks and fnmatchcase(m.name, pattern)
    ]
    if not matched:
        raise PatternMatchesNothing(
            f"pattern {pattern!r} matches no masked matrix; masked names: "
            f"{sorted(masks)!r}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(matched) - 1)))
    jobs = [
        (m, out_dir / f"{seq:0{width}d}_{_sanitize(m.name)}.pgm")
        for seq, m in enumerate(matched)
    ]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda job: render_single_matrix(job[0], masks[job[0].name], job[1]), jobs))
    else:
        for m, path in jobs:
            render_single_matrix(m, masks[m.name], path)
    return [str(path) for _, path in jobs]
