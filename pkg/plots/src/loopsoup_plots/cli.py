"""loopsoup-plot <kind> <input> <output>

kinds: scaling (scan CSV -> log-log figure), soup (JSONL dump ->
projected edge rendering).  Exit 0 on success, 1 on usage error, 2 on a
schema/read failure.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, plot_scaling, plot_soup
from .reader import SchemaError


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="loopsoup-plot", description=__doc__)
    p.add_argument("kind", choices=("scaling", "soup"))
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--monochrome", action="store_true",
                   help="soup only: draw all loops in black")
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    spec = FigureSpec(input_path=args.input, kind=args.kind,
                      output_path=args.output,
                      options={"monochrome": args.monochrome})
    try:
        if args.kind == "scaling":
            summary = plot_scaling(spec)
        else:
            summary = plot_soup(spec)
    except (SchemaError, OSError, KeyError) as exc:
        print(f"loopsoup-plot: {exc}", file=sys.stderr)
        return 2
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
