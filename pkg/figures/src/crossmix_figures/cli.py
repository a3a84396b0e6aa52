"""Command line: figures --in <dir> --out <dir> --select <names> --format <png|svg>."""

from __future__ import annotations

import argparse
import sys

from .loaders import InputError
from .render import FIGURES, FigureJob, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render publication-style figures from simulator CSV artifacts",
    )
    parser.add_argument("--in", dest="in_dir", required=True, help="directory with the CSV artifacts")
    parser.add_argument("--out", dest="out_dir", required=True, help="directory for the images")
    parser.add_argument(
        "--select",
        default="all",
        help=f"comma-separated figure names from {sorted(FIGURES)} or 'all'; "
        "an empty selection is a no-op",
    )
    parser.add_argument("--format", dest="fmt", default="png", choices=("png", "svg"))
    return parser


def parse_selection(text: str) -> tuple:
    if text.strip() == "":
        return ()
    if text.strip() == "all":
        return tuple(FIGURES)
    return tuple(name.strip() for name in text.split(",") if name.strip())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    selection = parse_selection(args.select)
    if not selection:
        return 0
    try:
        job = FigureJob(in_dir=args.in_dir, out_dir=args.out_dir, select=selection, fmt=args.fmt)
        written = render(job)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
