"""Command-line front-end: prune, inject, viz, bench, stats, selftest.

Exit codes: 0 success, 1 domain error (message names the failing file or
matrix), 2 usage error.  Every pipeline is reproducible from the printed
command line; all randomness sits behind explicit seed flags.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .delta import extract_delta, inject, load_delta, payload_sizes, save_delta
from .errors import KenError
from .pruner import PruneConfig, PruneStats, prune_snapshot
from .reference import run_selection_selfcheck
from .tensor_store import load_snapshot, save_snapshot, snapshot_checksum
from .viz import neighbor_counts, render_layerwise, render_neighbor_view, render_single_matrix


def _resolve_threads(value: int | None) -> int:
    """--threads wins; KEN_THREADS is the fallback; default 1."""
    if value is not None:
        return max(1, value)
    env = os.environ.get("KEN_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise KenError(f"KEN_THREADS is not an integer: {env!r}") from None
    return 1


def _parse_layers(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError(
            f"expected LO..HI (inclusive snapshot positions), got {text!r}"
        )
    try:
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"layer bounds must be integers: {text!r}")


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")
    if not ks:
        raise argparse.ArgumentTypeError("need at least one k")
    return ks


def _print_stats(stats: PruneStats) -> None:
    width = max([len("matrix")] + [len(s.name) for s in stats.per_matrix])
    print(f"{'matrix':<{width}}  {'retained':>10}  {'total':>10}  {'reset %':>8}")
    for s in stats.per_matrix:
        print(f"{s.name:<{width}}  {s.retained:>10}  {s.total:>10}  {s.reset_percent:>8}")
    print(f"{'total':<{width}}  {stats.retained:>10}  {stats.total:>10}  {stats.reset_percent:>8}")


def cmd_prune(args: argparse.Namespace) -> int:
    pre = load_snapshot(args.pre)
    fine = load_snapshot(args.fine)
    cfg = PruneConfig(
        k=args.k,
        matrix_filter=tuple(args.match) if args.match else None,
        layer_range=args.layers,
    )
    optimized, masks, stats = prune_snapshot(
        pre, fine, cfg, threads=_resolve_threads(args.threads)
    )
    delta = extract_delta(snapshot_checksum(pre), fine, masks, args.k)
    size = save_delta(delta, args.out, compress=not args.no_compress)
    if args.out_snapshot:
        save_snapshot(optimized, args.out_snapshot)
    _print_stats(stats)
    print(f"wrote {args.out} ({size} bytes, {len(delta)} matrices)")
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    pre = load_snapshot(args.pre)
    delta = load_delta(args.delta)
    optimized = inject(pre, snapshot_checksum(pre), delta)
    save_snapshot(optimized, args.out)
    print(f"wrote {args.out} ({len(optimized)} matrices)")
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    if args.view in ("single", "neighbors"):
        if not args.matrix or not args.out:
            args.parser.error(f"--view {args.view} requires --matrix and --out")
        if args.match or args.out_dir:
            args.parser.error(
                f"--view {args.view} takes --matrix/--out, not --match/--out-dir"
            )
    else:
        if not args.match or not args.out_dir:
            args.parser.error("--view layerwise requires --match and --out-dir")
        if args.matrix or args.out:
            args.parser.error(
                "--view layerwise takes --match/--out-dir, not --matrix/--out"
            )
    pre = load_snapshot(args.pre)
    delta = load_delta(args.delta)
    optimized = inject(pre, snapshot_checksum(pre), delta)
    masks = {e.name: e.mask for e in delta}
    if args.view == "single":
        render_single_matrix(
            optimized.get(args.matrix), delta.get(args.matrix).mask, args.out
        )
        print(f"wrote {args.out}")
    elif args.view == "neighbors":
        render_neighbor_view(neighbor_counts(delta.get(args.matrix).mask), args.out)
        print(f"wrote {args.out}")
    else:
        paths = render_layerwise(
            optimized,
            masks,
            args.match,
            args.out_dir,
            threads=_resolve_threads(args.threads),
        )
        for p in paths:
            print(f"wrote {p}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    report = bench_mod.run_reference_bench(
        ks=args.ks, seed_count=args.seeds, strategy=args.strategy
    )
    if args.out:
        report.write_csv(args.out)
    print(f"{'strategy':<8}  {'k':>3}  {'mean_f1':>8}  {'std':>8}  {'error':>8}")
    for (strategy, k), (mean, std) in sorted(report.aggregate().items()):
        print(f"{strategy:<8}  {k:>3}  {mean:>8.4f}  {std:>8.4f}  {1.0 - mean:>8.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    delta = load_delta(args.delta)
    values_bytes, mask_bytes = payload_sizes(delta)
    file_bytes = Path(args.delta).stat().st_size
    print(f"delta file:     {file_bytes} bytes ({args.delta})")
    print(f"payload:        {values_bytes} value bytes + {mask_bytes} mask bytes")
    print(f"matrices:       {len(delta)}")
    print(f"base checksum:  {delta.base_checksum:#010x}")
    if args.kenw:
        snap_bytes = Path(args.kenw).stat().st_size
        print(f"snapshot file:  {snap_bytes} bytes ({args.kenw})")
        print(f"size ratio:     {100.0 * file_bytes / snap_bytes:.2f}%")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    result = run_selection_selfcheck(
        rows=args.rows, max_m=args.max_m, seed=args.seed
    )
    print(
        f"checked {result.rows_checked} rows / {result.selections_checked} "
        f"selections: {len(result.mismatches)} mismatches"
    )
    if not result.ok:
        print("error: fast selection disagrees with the brute-force path",
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ken",
        description="Keep the densest fine-tuned weights per row, reset the "
        "rest to their pre-trained values, and store only the difference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="select per-row weights and write a delta file")
    p.add_argument("--pre", required=True, help="pre-trained snapshot (.kenw)")
    p.add_argument("--fine", required=True, help="fine-tuned snapshot (.kenw)")
    p.add_argument("--k", required=True, type=int, help="columns kept per row")
    p.add_argument("--out", required=True, help="delta output path (.kend)")
    p.add_argument("--layers", type=_parse_layers, default=None, metavar="LO..HI",
                   help="inclusive snapshot-order positions to prune")
    p.add_argument("--match", action="append", default=[], metavar="GLOB",
                   help="matrix name glob; repeatable, any match counts")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (KEN_THREADS fallback; default 1)")
    p.add_argument("--no-compress", action="store_true",
                   help="store the delta body raw instead of LZMA")
    p.add_argument("--out-snapshot", default=None,
                   help="also write the optimized snapshot (.kenw)")
    p.set_defaults(func=cmd_prune, parser=p)

    p = sub.add_parser("inject", help="rebuild the optimized snapshot from a delta")
    p.add_argument("--pre", required=True, help="pre-trained snapshot (.kenw)")
    p.add_argument("--delta", required=True, help="delta file (.kend)")
    p.add_argument("--out", required=True, help="reconstructed snapshot path")
    p.set_defaults(func=cmd_inject, parser=p)

    p = sub.add_parser("viz", help="render selection views as PGM images")
    p.add_argument("--pre", required=True, help="pre-trained snapshot (.kenw)")
    p.add_argument("--delta", required=True, help="delta file (.kend)")
    p.add_argument("--view", required=True, choices=("single", "neighbors", "layerwise"))
    p.add_argument("--matrix", default=None, help="matrix name (single/neighbors)")
    p.add_argument("--out", default=None, help="output image path (single/neighbors)")
    p.add_argument("--match", default=None, metavar="GLOB",
                   help="matrix name glob (layerwise)")
    p.add_argument("--out-dir", default=None, help="output directory (layerwise)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (KEN_THREADS fallback; default 1)")
    p.set_defaults(func=cmd_viz, parser=p)

    p = sub.add_parser("bench", help="run the reference density-vs-random sweep")
    p.add_argument("--strategy", choices=("kde", "random", "both"), default="both")
    p.add_argument("--ks", type=_parse_ks, default=list(bench_mod.REFERENCE_KS),
                   metavar="K1,K2,...", help="per-row budgets to sweep")
    p.add_argument("--seeds", type=int, default=bench_mod.REFERENCE_SEED_COUNT,
                   help="random-strategy seed count (seeds 0..N-1)")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench, parser=p)

    p = sub.add_parser("stats", help="report delta payload and file sizes")
    p.add_argument("--delta", required=True, help="delta file (.kend)")
    p.add_argument("--kenw", default=None,
                   help="snapshot to compare sizes against")
    p.set_defaults(func=cmd_stats, parser=p)

    p = sub.add_parser("selftest", help="check fast selection against brute force")
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--max-m", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest, parser=p)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    except (KenError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
