"""``lab`` command line: run presets, re-check artifacts, rasterize checkpoints."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import XorLabError
from ..network import load_checkpoint
from .config import PRESETS, ExperimentConfig, apply_override, preset
from .grid import decision_boundary_grid, write_grid_csv, write_grid_svg
from .runner import check, run


def _floats(text: str) -> tuple:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("bounds must be x0min,x0max,x1min,x1max")
    return vals


def _ints(text: str) -> list:
    """``"1,3,5-7"`` -> ``[1, 3, 5, 6, 7]``."""
    out = []
    for part in filter(None, text.split(",")):
        lo, sep, hi = part.partition("-")
        out.extend(range(int(lo), int(hi) + 1) if sep else [int(part)])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a preset or config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", type=Path, help="JSON config (or a run manifest)")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, repeatable")
    r.add_argument("--out", type=Path)
    r.add_argument("--seeds", type=_ints)
    r.add_argument("--jobs", type=int, default=1, help="seeds to run in parallel")

    c = sub.add_parser("check", help="re-evaluate acceptance predicates from artifacts")
    c.add_argument("--out", type=Path, required=True)

    g = sub.add_parser("grid", help="decision-boundary grid for a 2-D checkpoint")
    g.add_argument("--checkpoint", type=Path, required=True)
    g.add_argument("--bounds", type=_floats, default=(-2.0, 2.0, -2.0, 2.0))
    g.add_argument("--res", type=int, default=400)
    g.add_argument("--data", type=Path, help="dataset CSV to overlay")
    g.add_argument("--out", type=Path, help="output directory (default: next to checkpoint)")
    return p


def _print_verdict(summary: dict) -> None:
    for name, ok in summary["predicates"].items():
        extra = summary["counts"].get(name, {})
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {json.dumps(extra, sort_keys=True)}")
    if not summary["predicates"]:
        print("no acceptance predicates requested")


def _cmd_run(args) -> int:
    cfg = preset(args.preset) if args.preset else ExperimentConfig.load(args.config)
    for ov in args.overrides:
        cfg = apply_override(cfg, ov)
    if args.seeds:
        cfg.seeds = args.seeds
    cfg.validate()
    arts = run(cfg, out=args.out, jobs=args.jobs)
    print(f"wrote {arts.directory}")
    _print_verdict(arts.summary)
    return 0 if arts.summary["all_pass"] else 1


def _cmd_check(args) -> int:
    summary = check(args.out)
    _print_verdict(summary)
    return 0 if summary["all_pass"] else 1


def _cmd_grid(args) -> int:
    from ..distribution import read_dataset_csv

    params = load_checkpoint(args.checkpoint)
    grid = decision_boundary_grid(params, args.bounds, args.res)
    base = Path(args.checkpoint).with_suffix("")
    out = args.out or base.parent
    out.mkdir(parents=True, exist_ok=True)
    stem = base.name
    data = read_dataset_csv(args.data) if args.data else None
    csv = write_grid_csv(grid, out / f"{stem}_grid.csv")
    svg = write_grid_svg(grid, out / f"{stem}_grid.svg", data)
    print(f"wrote {csv}\nwrote {svg}")
    return 0


def _join_negative_values(argv: list) -> list:
    # argparse would read "--bounds -2,2,-2,2" as two options
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--bounds":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--bounds={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "check": _cmd_check, "grid": _cmd_grid}[args.command]
    try:
        return handler(args)
    except (XorLabError, FileNotFoundError) as exc:
        print(f"lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
