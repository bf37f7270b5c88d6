"""Per-row Gaussian kernel density estimation and likelihood-ranked top-k selection.

Each row is treated as a 1-D sample of size m.  The bandwidth follows the
1.06 * sigma * m**(-1/5) rule with the sample standard deviation (ddof=1),
densities are evaluated at the row elements themselves (self-term included),
and the k columns with the highest density are retained.  Ties, and the
degenerate case of a near-constant row, resolve by ascending column index so
results are identical across platforms and schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RowTooShort

SCOTT_FACTOR = 1.06
#: Sample standard deviations below this are treated as zero; densities on
#: such rows are undefined, so selection degrades to ascending-index order.
DEGENERATE_STD = 1e-12

_GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)
_BLOCK = 512  # rows of the m*m distance table evaluated at once


@dataclass(frozen=True, eq=False)
class RowSelection:
    """Retained column indices for one row, plus the full density vector.

    `indices` is strictly increasing with exactly min(k, m) entries;
    `densities` has length m and is kept for diagnostics.
    """

    indices: np.ndarray
    densities: np.ndarray


def bandwidth_scott(row) -> float:
    """Rule-of-thumb Gaussian bandwidth 1.06 * sigma * m**(-1/5).

    sigma is the sample standard deviation (denominator m-1).  Returns 0.0
    as the degenerate sentinel when sigma < DEGENERATE_STD, since no positive
    bandwidth is meaningful for a constant row.
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    m = row.size
    if m < 2:
        raise RowTooShort(f"bandwidth needs at least 2 samples, got {m}")
    sigma = float(row.std(ddof=1))
    if sigma < DEGENERATE_STD:
        return 0.0
    return SCOTT_FACTOR * sigma * m ** -0.2


def kde_density(row, h: float, x: float) -> float:
    """Gaussian KDE of `row` with bandwidth `h`, evaluated at `x`.

    (1 / (m*h)) * sum_j phi((x - row[j]) / h), with phi the standard normal
    pdf.  The self-term is included when x coincides with a row element.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    row = np.asarray(row, dtype=np.float64).ravel()
    z = (x - row) / h
    return float(np.exp(-0.5 * z * z).sum() * _GAUSS_NORM / (row.size * h))


def _densities_at_elements(row: np.ndarray, h: float) -> np.ndarray:
    """KDE evaluated at every row element; blocked to bound the m*m buffer."""
    m = row.size
    scale = _GAUSS_NORM / (m * h)
    out = np.empty(m, dtype=np.float64)
    for start in range(0, m, _BLOCK):
        stop = min(start + _BLOCK, m)
        z = (row[start:stop, None] - row[None, :]) / h
        out[start:stop] = np.exp(-0.5 * z * z).sum(axis=1) * scale
    return out


def select_top_k_row(row, k: int) -> RowSelection:
    """Indices of the min(k, m) columns with the highest KDE density.

    The ranking is computed once per row, so selections nest: the set chosen
    for k is a subset of the set chosen for k+1.  Equal densities (and the
    degenerate constant-row case, where all densities are reported as 0) fall
    back to ascending column index.
    """
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    row = np.asarray(row, dtype=np.float64).ravel()
    m = row.size
    if m < 1:
        raise RowTooShort("cannot select from an empty row")
    h = bandwidth_scott(row) if m >= 2 else 0.0
    if h == 0.0:
        densities = np.zeros(m, dtype=np.float64)
    else:
        densities = _densities_at_elements(row, h)
    order = np.argsort(-densities, kind="stable")
    indices = np.sort(order[: min(k, m)])
    return RowSelection(indices=indices, densities=densities)
