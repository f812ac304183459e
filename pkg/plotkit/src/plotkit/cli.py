"""Command-line entry point: plotkit render --spec <json> --out <file.svg>."""

import argparse
import sys

from .render import PlotSpecError, load_spec, render_trajectories


def main(argv=None):
    parser = argparse.ArgumentParser(prog="plotkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render a figure from a plot spec")
    p_render.add_argument("--spec", required=True,
                          help="path to the plot-spec JSON file")
    p_render.add_argument("--out", default=None,
                          help="output image path (overrides the spec)")
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.spec)
        path = render_trajectories(spec, out=args.out)
    except PlotSpecError as exc:
        print(f"plotkit: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"plotkit: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
