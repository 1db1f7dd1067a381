"""Command-line interface: ``figures <bundle> --kind <k> --out <png>``."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureRequest, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render figures from an experiment output bundle")
    parser.add_argument("bundle", help="path to an output bundle directory")
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS,
                        help="figure kind to render")
    parser.add_argument("--out", required=True,
                        help="output image path (png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    request = FigureRequest(bundle_path=args.bundle, figure_kind=args.kind,
                            output_path=args.out)
    try:
        target = render(request)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
