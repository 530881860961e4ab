"""Command line: mfscl-render --manifest PATH --figure N --out FILE."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bundle import BundleFormatError, FigureBundle, RoleMissingError
from .render import render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfscl-render", description=__doc__)
    parser.add_argument("--manifest", type=Path, required=True,
                        help="figure bundle manifest (key = value)")
    parser.add_argument("--figure", type=int, required=True, help="figure number 1-5")
    parser.add_argument("--out", type=Path, required=True, help="output image file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        bundle = FigureBundle.load(args.manifest)
        out = render(bundle, args.figure, args.out)
    except (RoleMissingError, BundleFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
