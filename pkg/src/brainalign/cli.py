"""Command-line entry point.

Verbs: synth, run, significance, shared, report, sweep, compare.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datamodel import read_accuracy_map, read_rois
from .errors import AlignError, ConfigError
from .pipeline import (
    RunConfig,
    SweepSpec,
    compare_context_vs_word,
    read_mask_csv,
    read_task_outcomes,
    run_pipeline,
    sweep_report,
    write_comparison,
    write_region_table,
    write_significance,
    write_sweep_outputs,
    write_task_table,
)
from .stats import fdp_threshold, paired_test_bh, region_summary, shared_accuracy
from .synth import synth_generate, write_synth


def parse_lambda_grid(text: str) -> tuple[float, ...]:
    """Parse "1e0:1e4:10log" (log-spaced) or a comma list "1,10,100"."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad lambda grid spec {text!r}")
        lo, hi, count = parts
        if count.endswith("log"):
            n = int(count[:-3])
            return tuple(np.logspace(np.log10(float(lo)), np.log10(float(hi)), n))
        n = int(count)
        return tuple(np.linspace(float(lo), float(hi), n))
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad lambda grid spec {text!r}") from exc


def parse_delays(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad delays spec {text!r}") from exc


def _add_run_parser(sub) -> None:
    p = sub.add_parser("run", help="full fit -> classify -> threshold -> report run")
    p.add_argument("--features", required=True)
    p.add_argument("--brain", required=True)
    p.add_argument("--adjacency")
    p.add_argument("--rois")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--nested-folds", type=int, default=10)
    p.add_argument("--lambda-grid", default="1e0:1e4:10log")
    p.add_argument("--delays", default="1,2,3,4")
    p.add_argument("--chunk-len", type=int, default=20)
    p.add_argument("--repeats", type=int, default=1000)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--norm", choices=["independent", "train-stats", "none"],
                   default="independent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--block-size", type=int, default=1024)
    p.add_argument("--overlapping-distractors", action="store_true",
                   help="allow distractor chunks to overlap the true chunk")
    p.add_argument("--no-weights", action="store_true",
                   help="skip writing encoding_fit.npz")


def _cmd_run(args) -> int:
    cfg = RunConfig(
        features=args.features, brain=args.brain, adjacency=args.adjacency,
        rois=args.rois, out=args.out, seed=args.seed, n_outer=args.folds,
        n_nested=args.nested_folds,
        lambda_grid=parse_lambda_grid(args.lambda_grid),
        delays=parse_delays(args.delays), chunk_len=args.chunk_len,
        n_repeats=args.repeats, q=args.q, threshold=args.threshold,
        norm=args.norm, workers=args.workers, block_size=args.block_size,
        disjoint_distractors=not args.overlapping_distractors,
        save_weights=not args.no_weights,
    )
    out = run_pipeline(cfg)
    print(f"run complete: {out}")
    return 0


def _cmd_synth(args) -> int:
    data = synth_generate(
        n_trs=args.trs, n_voxels=args.voxels, d=args.dim,
        frac_signal=args.frac_signal, snr=args.snr, graph_type=args.graph,
        seed=args.seed, words_per_tr=args.words_per_tr,
    )
    paths = write_synth(data, args.out)
    print(f"synthetic dataset written to {args.out} "
          f"({int(data.planted.sum())} signal voxels)")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_significance(args) -> int:
    acc = read_accuracy_map(args.acc)
    sig = fdp_threshold(acc, q=args.q)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_significance(sig, out)
    status = "delta_final=%g, %d rejected" % (sig.delta_final, sig.n_rejected)
    if not sig.threshold_found:
        status += " (no margin reached the target FDP)"
    print(status)
    return 0


def _cmd_shared(args) -> int:
    acc_a = read_accuracy_map(args.acc_a)
    acc_b = read_accuracy_map(args.acc_b)
    acc_ab = read_accuracy_map(args.acc_ab)
    shared = shared_accuracy(acc_a, acc_b, acc_ab)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # shared values can leave [0, 1], so they go to CSV rather than BAAM
    lines = ["index,shared_accuracy\n"]
    lines += [f"{i},{float(v)!r}\n"
              for i, v in enumerate(shared.values.reshape(-1))]
    out.write_text("".join(lines))
    print(f"shared-accuracy table written to {out} "
          f"(mean {shared.values.mean():.4f})")
    return 0


def _cmd_report(args) -> int:
    if args.task_variant or args.task_base:
        if not (args.task_variant and args.task_base):
            raise ConfigError("--task-variant and --task-base go together")
        variant = read_task_outcomes(args.task_variant)
        base = read_task_outcomes(args.task_base)
        comparisons = paired_test_bh(variant, base, alpha=args.alpha, q=args.q)
        write_task_table(comparisons, args.out)
        n_sig = sum(c.significant for c in comparisons)
        print(f"{len(comparisons)} tasks compared, {n_sig} significant; "
              f"table written to {args.out}")
        return 0
    if not args.acc or not args.rois:
        raise ConfigError("report needs either --acc/--rois or --task-variant/--task-base")
    maps = [read_accuracy_map(p) for p in args.acc]
    rois = read_rois(args.rois, n_voxels=maps[0].flat.size)
    rows = region_summary(maps, rois, threshold=args.threshold)
    write_region_table(rows, None, Path(args.out))
    print(f"region summary written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    spec = SweepSpec.from_manifest(args.manifest, baseline_layer=args.baseline_layer,
                                   mask_mode=args.mask_mode, mask_path=args.mask,
                                   q=args.q)
    paired = None
    if args.paired:
        paired = SweepSpec.from_manifest(args.paired, q=args.q)
    result = sweep_report(spec, paired=paired)
    write_sweep_outputs(result, args.out)
    print(f"sweep report written to {args.out} "
          f"({int(result.mask.sum())} voxels in mask)")
    return 0


def _cmd_compare(args) -> int:
    mask_long = read_mask_csv(args.long_mask)
    mask_word = read_mask_csv(args.word_mask)
    rois = read_rois(args.rois, n_voxels=mask_long.size) if args.rois else None
    result = compare_context_vs_word(mask_long, mask_word, rois=rois)
    write_comparison(result, args.out)
    print("partition counts: " + json.dumps(result.counts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="align",
        description="ridge encoding models with classification evaluation "
                    "and empirical FDR control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--trs", type=int, default=1200)
    p.add_argument("--voxels", type=int, default=2000)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--frac-signal", type=float, default=0.3)
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--graph", choices=["lattice", "random_geometric"],
                   default="lattice")
    p.add_argument("--words-per-tr", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    _add_run_parser(sub)

    p = sub.add_parser("significance", help="FDP-threshold an accuracy map")
    p.add_argument("--acc", required=True)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("shared", help="shared accuracy A + B - (A u B)")
    p.add_argument("--acc-a", required=True)
    p.add_argument("--acc-b", required=True)
    p.add_argument("--acc-ab", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="ROI fractions or task-comparison table")
    p.add_argument("--acc", nargs="*", help="accuracy maps (one per subject)")
    p.add_argument("--rois")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--task-variant", help="probe outcome CSV for the variant model")
    p.add_argument("--task-base", help="probe outcome CSV for the base model")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="layer x context curve report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--baseline-layer", type=int)
    p.add_argument("--paired", help="manifest of the paired run (deltas)")
    p.add_argument("--mask-mode", choices=["union", "all", "file"],
                   default="union")
    p.add_argument("--mask", help="mask CSV for --mask-mode file")
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="long-context vs word-embedding partition")
    p.add_argument("--long-mask", required=True)
    p.add_argument("--word-mask", required=True)
    p.add_argument("--rois")
    p.add_argument("--out", required=True)

    return parser


_COMMANDS = {
    "synth": _cmd_synth,
    "run": _cmd_run,
    "significance": _cmd_significance,
    "shared": _cmd_shared,
    "report": _cmd_report,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except AlignError as exc:
        print(f"error ({exc.code}): {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
