import numpy as np
import pytest

from ken import ModelSnapshot, WeightMatrix


def random_snapshot(rng, matrix_count=4, max_rows=16, max_cols=16, prefix="m"):
    """Snapshot of random float32 matrices with assorted shapes."""
    matrices = []
    for i in range(matrix_count):
        rows = int(rng.integers(1, max_rows + 1))
        cols = int(rng.integers(1, max_cols + 1))
        matrices.append(
            WeightMatrix(f"{prefix}{i:02d}", rng.standard_normal((rows, cols)))
        )
    return ModelSnapshot(tuple(matrices))


def random_pair(rng, matrix_count=4, max_rows=16, max_cols=16, scale=0.1):
    """Compatible (pre, fine) snapshots; fine = pre + small perturbation."""
    pre = random_snapshot(rng, matrix_count, max_rows, max_cols)
    fine = ModelSnapshot(
        tuple(
            WeightMatrix(
                m.name,
                m.data + scale * rng.standard_normal(m.shape).astype(np.float32),
            )
            for m in pre
        )
    )
    return pre, fine


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_pair(rng):
    return random_pair(rng)
