"""subdeq-plot: render figures from subdeq experiment CSVs.

    subdeq-plot residuals converge.csv -o residuals.png
    subdeq-plot loss run_a.csv run_b.csv -o loss.png

Exit codes: 0 on success, 1 on malformed or empty input.
"""

from __future__ import annotations

import argparse
import sys

from .plotting import TraceParseError, plot_loss, plot_residuals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subdeq-plot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    residuals = sub.add_parser("residuals", help="log-scale residual curves per variant")
    residuals.add_argument("csv", help="trace CSV with columns variant,k,residual")
    residuals.add_argument("-o", "--out", required=True, help="output image path")

    loss = sub.add_parser("loss", help="training-loss curves; several files overlay")
    loss.add_argument("csv", nargs="+", help="loss CSVs with columns step,loss")
    loss.add_argument("-o", "--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "residuals":
            out = plot_residuals(args.csv, args.out)
        else:
            out = plot_loss(args.csv, args.out)
    except (TraceParseError, OSError) as err:
        print(f"subdeq-plot: {err}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
