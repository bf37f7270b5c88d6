"""Visualization: PGM output, magnitude view, neighbor-count view, layer sweep."""

import numpy as np
import pytest

from ken import (
    MaskShapeMismatch,
    ModelSnapshot,
    NeighborGrid,
    PatternMatchesNothing,
    PruneConfig,
    WeightMatrix,
    neighbor_counts,
    neighbor_pixels,
    prune_snapshot,
    render_layerwise,
    render_neighbor_view,
    render_single_matrix,
    single_matrix_pixels,
    write_pgm,
)


def brute_force_counts(mask):
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    out = np.zeros((rows, cols), dtype=np.uint8)
    for i in range(rows):
        for j in range(cols):
            if not mask[i, j]:
                continue
            n = 0
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < rows and 0 <= jj < cols and mask[ii, jj]:
                    n += 1
            out[i, j] = n
    return out


class TestWritePgm:
    def test_header_and_payload(self, tmp_path):
        pixels = np.arange(6, dtype=np.uint8).reshape(2, 3)
        path = tmp_path / "img.pgm"
        write_pgm(path, pixels)
        raw = path.read_bytes()
        assert raw == b"P5\n3 2\n255\n" + bytes(range(6))

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "bad.pgm", np.zeros(4, dtype=np.uint8))

    def test_deterministic(self, tmp_path, rng):
        pixels = rng.integers(0, 256, size=(9, 7)).astype(np.uint8)
        write_pgm(tmp_path / "a.pgm", pixels)
        write_pgm(tmp_path / "b.pgm", pixels)
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


class TestSingleMatrixView:
    def test_all_pruned_is_white(self):
        pixels = single_matrix_pixels(np.ones((3, 4)), np.zeros((3, 4), dtype=bool))
        assert (pixels == 255).all()

    def test_equal_retained_values_are_black(self):
        data = np.full((2, 2), 7.0)
        pixels = single_matrix_pixels(data, np.ones((2, 2), dtype=bool))
        assert (pixels == 0).all()

    def test_retained_zero_values_render_black(self):
        pixels = single_matrix_pixels(np.zeros((2, 2)), np.ones((2, 2), dtype=bool))
        assert (pixels == 0).all()

    def test_mixed_row(self):
        data = np.array([[-3.0, 100.0]])
        mask = np.array([[True, False]])
        assert single_matrix_pixels(data, mask).tolist() == [[0, 255]]

    def test_maxabs_over_retained_only(self):
        # The pruned 100.0 must not dilute the scale of the retained cells.
        data = np.array([[1.0, 100.0, 2.0]])
        mask = np.array([[True, False, True]])
        pixels = single_matrix_pixels(data, mask)
        assert pixels[0, 2] == 0  # largest retained magnitude
        assert pixels[0, 1] == 255
        assert pixels[0, 0] == 127  # floor(254 * 0.5 + 0.5)

    def test_rounds_half_away_from_zero(self):
        # raw level 252.5 must round up to 253, not to even (252).
        data = np.array([[254.0, 1.5]])
        mask = np.ones((1, 2), dtype=bool)
        assert single_matrix_pixels(data, mask).tolist() == [[0, 253]]

    def test_sign_ignored(self):
        data = np.array([[-2.0, 2.0]])
        pixels = single_matrix_pixels(data, np.ones((1, 2), dtype=bool))
        assert pixels[0, 0] == pixels[0, 1]

    def test_shape_mismatch(self):
        with pytest.raises(MaskShapeMismatch):
            single_matrix_pixels(np.zeros((2, 2)), np.zeros((2, 3), dtype=bool))

    def test_render_writes_pgm(self, tmp_path):
        m = WeightMatrix("w", [[1.0, -4.0, 0.5]])
        mask = np.array([[True, True, False]])
        path = tmp_path / "w.pgm"
        render_single_matrix(m, mask, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n3 1\n255\n")
        assert len(raw) == len(b"P5\n3 1\n255\n") + 3


class TestNeighborCounts:
    def test_full_3x3(self):
        grid = neighbor_counts(np.ones((3, 3), dtype=bool))
        assert grid.counts.tolist() == [[2, 3, 2], [3, 4, 3], [2, 3, 2]]

    def test_single_cell(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        assert (neighbor_counts(mask).counts == 0).all()

    def test_checkerboard_has_no_neighbors(self):
        mask = np.indices((6, 6)).sum(axis=0) % 2 == 0
        assert (neighbor_counts(mask).counts == 0).all()

    def test_non_retained_cells_count_zero(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False
        grid = neighbor_counts(mask)
        assert grid.counts[1, 1] == 0

    def test_matches_brute_force(self, rng):
        for _ in range(40):
            rows = int(rng.integers(1, 12))
            cols = int(rng.integers(1, 12))
            mask = rng.random((rows, cols)) < 0.4
            grid = neighbor_counts(mask)
            assert np.array_equal(grid.counts, brute_force_counts(mask))

    def test_rejects_non_2d(self):
        with pytest.raises(MaskShapeMismatch):
            neighbor_counts(np.zeros(5, dtype=bool))

    def test_grid_equality(self):
        mask = np.eye(4, dtype=bool)
        assert neighbor_counts(mask) == neighbor_counts(mask)
        assert neighbor_counts(mask) != neighbor_counts(~mask)


class TestNeighborPixels:
    def test_level_mapping(self):
        grid = NeighborGrid(np.array([[0, 1, 2, 3, 4]], dtype=np.uint8))
        assert neighbor_pixels(grid).tolist() == [[255, 204, 153, 102, 51]]

    def test_pruned_cells_render_white(self):
        mask = np.zeros((2, 2), dtype=bool)
        pixels = neighbor_pixels(neighbor_counts(mask))
        assert (pixels == 255).all()

    def test_render_round_trip(self, tmp_path):
        grid = neighbor_counts(np.ones((2, 3), dtype=bool))
        path = tmp_path / "n.pgm"
        render_neighbor_view(grid, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n3 2\n255\n")
        body = raw[len(b"P5\n3 2\n255\n"):]
        assert np.array_equal(
            np.frombuffer(body, dtype=np.uint8).reshape(2, 3),
            neighbor_pixels(grid),
        )


class TestLayerwise:
    def _pruned(self, rng, names):
        pre = ModelSnapshot(
            tuple(
                WeightMatrix(n, rng.standard_normal((4, 6)).astype(np.float32))
                for n in names
            )
        )
        fine = ModelSnapshot(
            tuple(
                WeightMatrix(m.name, m.data + 0.1 * rng.standard_normal(m.shape).astype(np.float32))
                for m in pre
            )
        )
        return prune_snapshot(pre, fine, PruneConfig(2))

    def test_names_and_order(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["enc.w", "dec.w", "head.w"])
        paths = render_layerwise(optimized, masks, "*", tmp_path / "out")
        assert [p.rsplit("/", 1)[-1] for p in paths] == [
            "00_enc.w.pgm",
            "01_dec.w.pgm",
            "02_head.w.pgm",
        ]
        for p in paths:
            assert (tmp_path / "out" / p.rsplit("/", 1)[-1]).exists()

    def test_pattern_filters(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["enc.w", "dec.w", "head.w"])
        paths = render_layerwise(optimized, masks, "*c.w", tmp_path / "out")
        assert [p.rsplit("/", 1)[-1] for p in paths] == [
            "00_enc.w.pgm",
            "01_dec.w.pgm",
        ]

    def test_pattern_matches_nothing(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["enc.w"])
        with pytest.raises(PatternMatchesNothing):
            render_layerwise(optimized, masks, "zzz*", tmp_path / "out")

    def test_unsafe_characters_sanitized(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["block/0:w"])
        paths = render_layerwise(optimized, masks, "*", tmp_path / "out")
        assert paths[0].rsplit("/", 1)[-1] == "00_block_0_w.pgm"

    def test_prefix_width_grows_past_hundred(self, rng, tmp_path):
        names = [f"m{i}" for i in range(101)]
        optimized, masks, _ = self._pruned(rng, names)
        paths = render_layerwise(optimized, masks, "*", tmp_path / "out")
        assert paths[0].rsplit("/", 1)[-1] == "000_m0.pgm"
        assert paths[100].rsplit("/", 1)[-1] == "100_m100.pgm"

    def test_only_masked_matrices_considered(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["a", "b"])
        del masks["a"]
        paths = render_layerwise(optimized, masks, "*", tmp_path / "out")
        assert [p.rsplit("/", 1)[-1] for p in paths] == ["00_b.pgm"]

    def test_thread_count_does_not_change_bytes(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, [f"m{i}" for i in range(6)])
        one = render_layerwise(optimized, masks, "*", tmp_path / "one", threads=1)
        eight = render_layerwise(optimized, masks, "*", tmp_path / "eight", threads=8)
        for a, b in zip(one, eight):
            from pathlib import Path

            assert Path(a).read_bytes() == Path(b).read_bytes()

    def test_matches_single_matrix_render(self, rng, tmp_path):
        optimized, masks, _ = self._pruned(rng, ["w"])
        paths = render_layerwise(optimized, masks, "*", tmp_path / "out")
        direct = tmp_path / "direct.pgm"
        render_single_matrix(optimized.get("w"), masks["w"], direct)
        from pathlib import Path

        assert Path(paths[0]).read_bytes() == direct.read_bytes()
