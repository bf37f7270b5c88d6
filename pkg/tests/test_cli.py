"""CLI surface: exit codes, output contracts, end-to-end pipelines."""

import shutil
import subprocess

import numpy as np
import pytest

from ken import (
    ModelSnapshot,
    PruneConfig,
    WeightMatrix,
    load_delta,
    load_snapshot,
    prune_snapshot,
    save_snapshot,
)
from ken.cli import dispatch
from conftest import random_pair


@pytest.fixture()
def pair_files(rng, tmp_path):
    pre, fine = random_pair(rng, matrix_count=3, max_rows=8, max_cols=8)
    pre_path = tmp_path / "pre.kenw"
    fine_path = tmp_path / "fine.kenw"
    save_snapshot(pre, pre_path)
    save_snapshot(fine, fine_path)
    return pre, fine, str(pre_path), str(fine_path)


def run_prune(pair_files, tmp_path, *extra):
    _, _, pre_path, fine_path = pair_files
    out = str(tmp_path / "d.kend")
    code = dispatch(
        ["prune", "--pre", pre_path, "--fine", fine_path, "--k", "3", "--out", out]
        + list(extra)
    )
    return code, out


class TestPrune:
    def test_happy_path(self, pair_files, tmp_path, capsys):
        code, out = run_prune(pair_files, tmp_path)
        captured = capsys.readouterr()
        assert code == 0
        assert "matrix" in captured.out and "reset %" in captured.out
        assert f"wrote {out}" in captured.out
        assert load_delta(out).names()

    def test_stats_table_row_per_matrix(self, pair_files, tmp_path, capsys):
        pre, _, _, _ = pair_files
        code, _ = run_prune(pair_files, tmp_path)
        captured = capsys.readouterr()
        assert code == 0
        for m in pre:
            assert m.name in captured.out
        assert "total" in captured.out

    def test_out_snapshot(self, pair_files, tmp_path, capsys):
        pre, fine, _, _ = pair_files
        snap_out = tmp_path / "opt.kenw"
        code, _ = run_prune(pair_files, tmp_path, "--out-snapshot", str(snap_out))
        capsys.readouterr()
        assert code == 0
        expected, _, _ = prune_snapshot(pre, fine, PruneConfig(3))
        assert load_snapshot(snap_out) == expected

    def test_layers_filter(self, pair_files, tmp_path, capsys):
        pre, _, _, _ = pair_files
        code, out = run_prune(pair_files, tmp_path, "--layers", "1..1")
        capsys.readouterr()
        assert code == 0
        assert load_delta(out).names() == [pre[1].name]

    def test_match_filter(self, pair_files, tmp_path, capsys):
        pre, _, _, _ = pair_files
        code, out = run_prune(pair_files, tmp_path, "--match", pre[0].name)
        capsys.readouterr()
        assert code == 0
        assert load_delta(out).names() == [pre[0].name]

    def test_no_compress_loads_identically(self, pair_files, tmp_path, capsys):
        code_c, out_c = run_prune(pair_files, tmp_path)
        raw_path = tmp_path / "raw.kend"
        _, _, pre_path, fine_path = pair_files
        code_r = dispatch(
            ["prune", "--pre", pre_path, "--fine", fine_path, "--k", "3",
             "--out", str(raw_path), "--no-compress"]
        )
        capsys.readouterr()
        assert code_c == 0 and code_r == 0
        assert load_delta(out_c) == load_delta(raw_path)

    def test_thread_count_reproducible(self, pair_files, tmp_path, capsys):
        _, _, pre_path, fine_path = pair_files
        outs = []
        for threads, name in ((1, "one.kend"), (8, "eight.kend")):
            path = tmp_path / name
            code = dispatch(
                ["prune", "--pre", pre_path, "--fine", fine_path, "--k", "2",
                 "--out", str(path), "--threads", str(threads)]
            )
            assert code == 0
            outs.append(path.read_bytes())
        capsys.readouterr()
        assert outs[0] == outs[1]

    def test_env_thread_fallback(self, pair_files, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("KEN_THREADS", "4")
        code, _ = run_prune(pair_files, tmp_path)
        capsys.readouterr()
        assert code == 0

    def test_bad_env_thread_value(self, pair_files, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("KEN_THREADS", "many")
        code, _ = run_prune(pair_files, tmp_path)
        captured = capsys.readouterr()
        assert code == 1
        assert captured.err.startswith("error:") and "KEN_THREADS" in captured.err

    def test_incompatible_pair_names_matrix(self, rng, tmp_path, capsys):
        pre = ModelSnapshot((WeightMatrix("w1", np.zeros((2, 2), dtype=np.float32)),))
        fine = ModelSnapshot((WeightMatrix("w1", np.zeros((3, 2), dtype=np.float32)),))
        pre_path, fine_path = tmp_path / "p.kenw", tmp_path / "f.kenw"
        save_snapshot(pre, pre_path)
        save_snapshot(fine, fine_path)
        code = dispatch(
            ["prune", "--pre", str(pre_path), "--fine", str(fine_path),
             "--k", "1", "--out", str(tmp_path / "d.kend")]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert captured.err.startswith("error:")
        assert "w1" in captured.err

    def test_missing_input_file(self, tmp_path, capsys):
        code = dispatch(
            ["prune", "--pre", str(tmp_path / "nope.kenw"),
             "--fine", str(tmp_path / "nope.kenw"),
             "--k", "1", "--out", str(tmp_path / "d.kend")]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert captured.err.startswith("error:")

    def test_bad_layers_syntax(self, pair_files, tmp_path, capsys):
        code, _ = run_prune(pair_files, tmp_path, "--layers", "3")
        capsys.readouterr()
        assert code == 2

    def test_missing_required_flag(self, tmp_path, capsys):
        code = dispatch(["prune", "--pre", "x.kenw"])
        capsys.readouterr()
        assert code == 2


class TestInject:
    def test_round_trip_bytes(self, pair_files, tmp_path, capsys):
        pre, fine, pre_path, _ = pair_files
        snap_out = tmp_path / "opt.kenw"
        _, delta_out = run_prune(pair_files, tmp_path, "--out-snapshot", str(snap_out))
        rebuilt = tmp_path / "rebuilt.kenw"
        code = dispatch(
            ["inject", "--pre", pre_path, "--delta", delta_out, "--out", str(rebuilt)]
        )
        capsys.readouterr()
        assert code == 0
        assert rebuilt.read_bytes() == snap_out.read_bytes()

    def test_wrong_base(self, pair_files, tmp_path, capsys):
        _, fine, _, fine_path = pair_files
        _, delta_out = run_prune(pair_files, tmp_path)
        code = dispatch(
            ["inject", "--pre", fine_path, "--delta", delta_out,
             "--out", str(tmp_path / "x.kenw")]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert captured.err.startswith("error:")


class TestViz:
    @pytest.fixture()
    def pruned(self, pair_files, tmp_path, capsys):
        pre, _, pre_path, _ = pair_files
        _, delta_out = run_prune(pair_files, tmp_path)
        capsys.readouterr()
        return pre, pre_path, delta_out

    def test_single_view(self, pruned, tmp_path, capsys):
        pre, pre_path, delta_out = pruned
        out = tmp_path / "w.pgm"
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "single",
             "--matrix", pre[0].name, "--out", str(out)]
        )
        capsys.readouterr()
        assert code == 0
        assert out.read_bytes().startswith(b"P5\n")

    def test_neighbors_view(self, pruned, tmp_path, capsys):
        pre, pre_path, delta_out = pruned
        out = tmp_path / "n.pgm"
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "neighbors",
             "--matrix", pre[0].name, "--out", str(out)]
        )
        capsys.readouterr()
        assert code == 0
        assert out.read_bytes().startswith(b"P5\n")

    def test_layerwise_view(self, pruned, tmp_path, capsys):
        _, pre_path, delta_out = pruned
        out_dir = tmp_path / "layers"
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "layerwise",
             "--match", "*", "--out-dir", str(out_dir)]
        )
        captured = capsys.readouterr()
        assert code == 0
        written = sorted(p.name for p in out_dir.iterdir())
        assert len(written) == 3 and written[0].startswith("00_")
        assert captured.out.count("wrote ") == 3

    def test_single_requires_matrix_and_out(self, pruned, capsys):
        _, pre_path, delta_out = pruned
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "single"]
        )
        capsys.readouterr()
        assert code == 2

    def test_single_rejects_layerwise_flags(self, pruned, tmp_path, capsys):
        pre, pre_path, delta_out = pruned
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "single",
             "--matrix", pre[0].name, "--out", str(tmp_path / "x.pgm"),
             "--match", "*"]
        )
        capsys.readouterr()
        assert code == 2

    def test_layerwise_requires_match_and_dir(self, pruned, capsys):
        _, pre_path, delta_out = pruned
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "layerwise"]
        )
        capsys.readouterr()
        assert code == 2

    def test_unknown_matrix(self, pruned, tmp_path, capsys):
        _, pre_path, delta_out = pruned
        code = dispatch(
            ["viz", "--pre", pre_path, "--delta", delta_out, "--view", "single",
             "--matrix", "ghost", "--out", str(tmp_path / "x.pgm")]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert "ghost" in captured.err


class TestStats:
    def test_delta_only(self, pair_files, tmp_path, capsys):
        _, delta_out = run_prune(pair_files, tmp_path)
        capsys.readouterr()
        code = dispatch(["stats", "--delta", delta_out])
        captured = capsys.readouterr()
        assert code == 0
        assert "value bytes" in captured.out and "mask bytes" in captured.out
        assert "base checksum" in captured.out

    def test_with_snapshot_comparison(self, pair_files, tmp_path, capsys):
        _, _, pre_path, _ = pair_files
        _, delta_out = run_prune(pair_files, tmp_path)
        capsys.readouterr()
        code = dispatch(["stats", "--delta", delta_out, "--kenw", pre_path])
        captured = capsys.readouterr()
        assert code == 0
        assert "size ratio" in captured.out and "%" in captured.out


class TestBench:
    def test_small_sweep_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = dispatch(
            ["bench", "--strategy", "kde", "--ks", "0", "--seeds", "2",
             "--out", str(out)]
        )
        captured = capsys.readouterr()
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "strategy,k,seed,reset_fraction,f1_weighted"
        assert len(lines) == 3
        assert "mean_f1" in captured.out

    def test_bad_ks(self, capsys):
        code = dispatch(["bench", "--ks", "two"])
        capsys.readouterr()
        assert code == 2


class TestSelftest:
    def test_clean_run(self, capsys):
        code = dispatch(["selftest", "--rows", "10"])
        captured = capsys.readouterr()
        assert code == 0
        assert "0 mismatches" in captured.out


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run(
            ["python3", "-m", "ken", "selftest", "--rows", "5"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "0 mismatches" in proc.stdout

    def test_console_script(self):
        assert shutil.which("ken")
        proc = subprocess.run(["ken", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        for command in ("prune", "inject", "viz", "bench", "stats", "selftest"):
            assert command in proc.stdout

    def test_usage_error_exit_code(self):
        proc = subprocess.run(["ken", "bogus"], capture_output=True, text=True)
        assert proc.returncode == 2
