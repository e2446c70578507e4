"""Command-line entry point: extract, patch-attn, probe.

Exit codes: 0 ok, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import NlpConfigError, NlpError


def parse_int_list(text: str) -> tuple[int, ...]:
    """Parse "0,7,12" or a "0..12" range."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise NlpConfigError(f"bad integer list {text!r}") from exc


def load_model_and_tokenizer(spec: str, kind: str):
    """Load from a local directory or a hub identifier; eager attention
    so attention maps stay inspectable."""
    import torch
    from transformers import AutoModel, AutoModelForMaskedLM, AutoTokenizer

    cls = AutoModelForMaskedLM if kind == "mlm" else AutoModel
    try:
        model = cls.from_pretrained(spec, attn_implementation="eager")
        tokenizer = AutoTokenizer.from_pretrained(spec)
    except Exception as exc:  # hub/file errors vary widely
        raise NlpError(f"cannot load model {spec!r}: {exc}") from exc
    model.eval()
    torch.set_grad_enabled(False)
    return model, tokenizer


def _cmd_extract(args) -> int:
    from .extract import ExtractionSpec, extract_to_files

    text = Path(args.text).read_text().split()
    model, tokenizer = load_model_and_tokenizer(args.model, kind="base")
    written = []
    for k in parse_int_list(args.context):
        spec = ExtractionSpec(model_name=args.model,
                              layers=parse_int_list(args.layers),
                              context_length=k, pooling=args.pooling,
                              dataset_id=args.dataset_id,
                              batch_size=args.batch_size)
        written += extract_to_files(text, spec, model, tokenizer, args.out)
    print(f"wrote {len(written)} feature files to {args.out}")
    return 0


def _cmd_patch_attn(args) -> int:
    from .ablate import apply_uniform_attention

    model, tokenizer = load_model_and_tokenizer(args.model, kind="mlm")
    patched = apply_uniform_attention(model, args.layer,
                                      value_mode=args.value_identity)
    out = Path(args.out)
    patched.save_pretrained(out)
    tokenizer.save_pretrained(out)
    print(f"uniform-attention layer {args.layer} variant saved to {out}")
    return 0


def _cmd_probe(args) -> int:
    from .probe import run_suite, write_outcomes, write_summary

    model, tokenizer = load_model_and_tokenizer(args.model, kind="mlm")
    results = run_suite(model, tokenizer, args.stimuli,
                        batch_size=args.batch_size)
    write_outcomes(results, args.out)
    if args.summary:
        write_summary(results, args.summary)
    for r in results:
        print(f"{r.condition}: {r.accuracy:.2f} "
              f"({r.n_items} items, {r.n_excluded} excluded)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="align-nlp",
        description="transformer feature extraction, attention ablation "
                    "and agreement probes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="write context-window layer features")
    p.add_argument("--model", required=True)
    p.add_argument("--layers", required=True, help='e.g. "0..12" or "0,7"')
    p.add_argument("--context", required=True, help='e.g. "1,4,10,25,40"')
    p.add_argument("--pooling", choices=["last-token", "mean"],
                   default="last-token")
    p.add_argument("--text", required=True, help="whitespace-separated words")
    p.add_argument("--dataset-id", default="")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--out", required=True)

    p = sub.add_parser("patch-attn", help="save a uniform-attention variant")
    p.add_argument("--model", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--value-identity", choices=["full", "per-head"],
                   default="full")
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="run masked-verb agreement tasks")
    p.add_argument("--model", required=True)
    p.add_argument("--stimuli", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--summary", help="optional per-condition accuracy CSV")
    p.add_argument("--out", required=True)

    return parser


_COMMANDS = {
    "extract": _cmd_extract,
    "patch-attn": _cmd_patch_attn,
    "probe": _cmd_probe,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NlpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
