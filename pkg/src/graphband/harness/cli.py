"""``graphband`` command line: run experiment grids, aggregate, plot, verify."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .report import AggregateError, aggregate, plot
from .runner import run_matrix
from .verify import run_checks

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _floats(text):
    return [float(_fraction(v)) for v in text.split(",") if v]


def _fraction(v: str) -> float:
    """Accept ``0.04`` or ``1/25``."""
    if "/" in v:
        num, den = v.split("/", 1)
        return float(num) / float(den)
    return float(v)


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphband", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every cell of an experiment config")
    r.add_argument("--config", required=True, help="experiment JSON file")
    r.add_argument("--out", help="output directory (overrides $GRAPHBAND_OUT and the config)")
    r.add_argument("--jobs", type=int, default=1, help="cells run in parallel")
    r.add_argument("--T", type=int, help="override the horizon")
    r.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    r.add_argument("--epsilons", type=_floats, help="comma-separated grid steps, e.g. 1/25,1/50")
    r.add_argument("--algorithms", type=lambda s: [a for a in s.split(",") if a])
    r.add_argument("--no-report", action="store_true", help="skip aggregation and plots")

    a = sub.add_parser("aggregate", help="mean and sd of normalized regret across seeds")
    a.add_argument("--in", dest="in_dir", required=True)
    a.add_argument("--out")

    p = sub.add_parser("plot", help="render SVG regret curves from a run directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out")
    p.add_argument("--label")

    sub.add_parser("verify", help="quick property checks of the DEC and graph code")
    return ap


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        for name in ("T", "seeds", "epsilons", "algorithms"):
            value = getattr(args, name)
            if value is not None:
                setattr(cfg, name, value)
        cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = cfg.output_dir(args.out)
    manifest = run_matrix(cfg, out, jobs=max(1, args.jobs))
    failed = [c["cell_id"] for c in manifest["cells"] if c["status"] != "ok"]
    print(f"{len(manifest['cells']) - len(failed)}/{len(manifest['cells'])} cells ok -> {out}")
    if not args.no_report and len(failed) < len(manifest["cells"]):
        aggregate(out)
        for path in plot(out):
            print(f"wrote {path}")
    if failed:
        print("failed cells: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    try:
        groups = aggregate(args.in_dir, args.out)
    except AggregateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for g in groups:
        sd = "n/a (single seed)" if g.sd is None else f"{g.sd[-1]:.4f}"
        print(f"{g.stem}: final normalized regret {g.mean[-1]:.4f} +- {sd}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    try:
        paths = plot(args.in_dir, args.out, args.label)
    except AggregateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "aggregate": _cmd_aggregate, "plot": _cmd_plot, "verify": _cmd_verify}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
