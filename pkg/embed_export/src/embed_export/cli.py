"""Command-line interface; flags mirror ExportSpec one to one."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import POOLING_MODES, ExportSpec, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="embed a corpus with a pretrained transformer and write "
        "the binary embedding file the core toolkit loads",
    )
    parser.add_argument("--model", required=True, help="model identifier or local directory")
    parser.add_argument("--corpus", required=True, help="corpus JSONL path")
    parser.add_argument("--out", required=True, help="output embedding file path")
    parser.add_argument("--pooling", choices=POOLING_MODES, default="first-subword")
    parser.add_argument("--add-markers", action="store_true",
                        help="register [e] and [/e] as vocabulary tokens before embedding")
    parser.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExportSpec(
            model=args.model,
            corpus=args.corpus,
            out=args.out,
            pooling=args.pooling,
            add_markers=args.add_markers,
            batch_size=args.batch_size,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        info = export(spec)
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info['samples']} samples at dimension {info['dim']} to {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
