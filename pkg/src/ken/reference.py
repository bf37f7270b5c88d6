"""Loop-based reference implementations for self-checking the fast path.

Everything here is deliberately written in plain Python (math.exp, explicit
sums) so it shares no code with ken.kde.  The `selftest` CLI subcommand and
the test suite compare the two routes element by element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RowTooShort
from .kde import select_top_k_row


def reference_bandwidth(row) -> float:
    """1.06 * sigma * m**(-1/5) with ddof=1, via explicit sums; 0.0 if degenerate."""
    row = [float(v) for v in row]
    m = len(row)
    if m < 2:
        raise RowTooShort(f"bandwidth needs at least 2 samples, got {m}")
    mean = sum(row) / m
    var = sum((v - mean) ** 2 for v in row) / (m - 1)
    sigma = math.sqrt(var)
    if sigma < 1e-12:
        return 0.0
    return 1.06 * sigma * m ** -0.2


def reference_density(row, h: float, x: float) -> float:
    """Gaussian KDE at x via an explicit kernel sum (self-term included)."""
    row = [float(v) for v in row]
    m = len(row)
    total = sum(math.exp(-0.5 * ((x - v) / h) ** 2) for v in row)
    return total / (m * h * math.sqrt(2.0 * math.pi))


def reference_top_k(row, k: int) -> list[int]:
    """Retained indices by density rank, ties and degenerate rows by index."""
    row = [float(v) for v in row]
    m = len(row)
    if m < 1:
        raise RowTooShort("cannot select from an empty row")
    h = reference_bandwidth(row) if m >= 2 else 0.0
    if h == 0.0:
        ranking = list(range(m))
    else:
        dens = [reference_density(row, h, x) for x in row]
        ranking = sorted(range(m), key=lambda j: (-dens[j], j))
    return sorted(ranking[: min(k, m)])


@dataclass(frozen=True)
class SelfCheckResult:
    rows_checked: int
    selections_checked: int
    mismatches: list

    @property
    def ok(self) -> bool:
        return not self.mismatches


def run_selection_selfcheck(rows: int = 200, max_m: int = 64, seed: int = 0) -> SelfCheckResult:
    """Compare fast selection against the reference on random rows, all k.

    Rows are standard-normal with lengths 1..max_m; every k in [0, m] is
    checked.  Returns the mismatch list (empty means the routes agree).
    """
    rng = np.random.default_rng(seed)
    mismatches = []
    selections = 0
    for i in range(rows):
        m = int(rng.integers(1, max_m + 1))
        row = rng.standard_normal(m)
        for k in range(m + 1):
            fast = select_top_k_row(row, k).indices.tolist()
            slow = reference_top_k(row, k)
            selections += 1
            if fast != slow:
                mismatches.append((i, k, fast, slow))
    return SelfCheckResult(rows, selections, mismatches)
