"""``plots render <spec-file>`` — render one figure from one spec.

Exit codes: 0 on success (and for an empty trajectory table, which
renders contours only); 1 for schema mismatches, bad specs, and I/O
problems, with a one-line reason on stderr; 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys

from plots.csvio import SchemaMismatch
from plots.figspec import SpecError, load_figure_spec
from plots.render import render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Figures from the vortex-pipeline CSV artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render the figure a spec file describes")
    p.add_argument("spec", help="INI figure spec (see plots.figspec)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_figure_spec(args.spec)
        info = render(spec)
    except (SchemaMismatch, SpecError, OSError, ValueError) as exc:
        print(f"[render] {exc}", file=sys.stderr)
        return 1
    detail = ", ".join(f"{k} = {v:.4g}" if isinstance(v, float) else f"{k} = {v}"
                       for k, v in sorted(info.items()))
    print(f"wrote {spec.out} ({detail})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
