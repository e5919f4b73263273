"""Command-line figure rendering: --csv/--kind/--out plus optional column
overrides."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isingbound-plots",
        description="Render figures from isingbound experiment CSV files.")
    parser.add_argument("--csv", action="append", required=True,
                        help="Input CSV; repeat for multi-panel figures.")
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--out", required=True, help="Output image path.")
    parser.add_argument("--x", default=None, help="X column override.")
    parser.add_argument("--y", default=None, help="Y column override.")
    parser.add_argument("--group-by", default=None,
                        help="Grouping column override.")
    parser.add_argument("--title", action="append", default=None,
                        help="Panel title; repeat per CSV.")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        csv_paths=tuple(args.csv),
        kind=args.kind,
        out_path=args.out,
        x=args.x,
        y=args.y,
        group_by=args.group_by,
        titles=tuple(args.title) if args.title else None,
    )
    try:
        path = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
