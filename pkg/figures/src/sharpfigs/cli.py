"""``render --spec spec.json --out fig.png``"""
from __future__ import annotations

import argparse
import sys

from .errors import FigureError
from .figspec import load_spec
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="render", description=__doc__)
    parser.add_argument("--spec", required=True, help="figure spec JSON file")
    parser.add_argument("--out", default=None, help="output image path (overrides spec)")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        target = render(spec, out=args.out)
    except FigureError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    sys.stdout.write(f"{target}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
