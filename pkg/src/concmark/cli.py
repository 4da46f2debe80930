"""Command-line front end.

    concmark scenario FILE [FILE ...] [--seed S] [--out-dir DIR] [--grid r0:r1:steps]

``certify``, ``envelope`` and ``tails`` run the corresponding prefix of the
pipeline.  A FILE that does not exist is looked up among the bundled
scenarios by name.  Exit status: 0 when every check passes, 2 when a
certification or dominance check fails, 1 on usage or parse errors.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .scenario import ScenarioError, load, parse_grid, run, write_artifacts
from .simulators import worker_count

STAGES = {
    "certify": ("certify",),
    "envelope": ("envelope",),
    "tails": ("envelope", "tails"),
    "scenario": ("certify", "envelope", "tails"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concmark", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("certify", "certify the observable in L_V(a, b)"),
                        ("envelope", "compute constants and the concentration envelope"),
                        ("tails", "compare the envelope with the oracle tail"),
                        ("scenario", "run the full pipeline")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("files", nargs="+", metavar="FILE")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--grid", default=None, metavar="r0:r1:steps")
    return parser


def _one(job) -> tuple[int, str]:
    path, command, seed, grid, out_dir = job
    try:
        sc = load(path, seed=seed, grid=grid)
        res = run(sc, STAGES[command])
    except ScenarioError as exc:
        return 1, f"{path}: error: {exc}"
    target = write_artifacts(res, out_dir)
    if res.passed:
        return 0, f"{sc.name}: PASS ({target})"
    first = res.failures[0]
    where = f" at {first['state']}" if first["stage"] == "tails" else ""
    return 2, f"{sc.name}: FAIL [{first['stage']}] {first['message']}{where} ({target})"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        grid = parse_grid(args.grid) if args.grid else None
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    jobs = [(f, args.command, args.seed, grid, args.out_dir) for f in args.files]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]
    for code, line in results:
        print(line, file=sys.stderr if code == 1 else sys.stdout)
    codes = {c for c, _ in results}
    return 1 if 1 in codes else (2 if 2 in codes else 0)


if __name__ == "__main__":
    sys.exit(main())
