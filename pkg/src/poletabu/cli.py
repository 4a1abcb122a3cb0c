"""Command line entry point.

    poletabu optimize --scheme raw|steps:K --runs R --seed S --budget B --refine F --out DIR
    poletabu report --in DIR
    poletabu evaluate --scheme steps:2 --params 0.07,0.13,0.015,0.04

Exit codes: 0 success, 1 usage error, 2 run failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .harness import ExperimentConfig, report, run_experiment, summaries_from_dir
from .mesh import MeshConfig
from .objective import EvaluationError, PoleObjective
from .param_space import parse_scheme, to_profile
from .tabu import TabuConfig

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

OPTIMIZE_DEFAULTS = {
    "scheme": "steps:2",
    "runs": 5,
    "seed": 0,
    "budget": 20000,
    "refine": 2,
    "out": "results",
    "workers": 1,
    "jobs": 1,
}
_INT_KEYS = {"runs", "seed", "budget", "refine", "workers", "jobs"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path: str | Path) -> dict[str, object]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out: dict[str, object] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in OPTIMIZE_DEFAULTS:
            raise UsageError(f"{path}:{n}: expected one of {sorted(OPTIMIZE_DEFAULTS)} as key=value")
        value = value.strip()
        try:
            out[key] = int(value) if key in _INT_KEYS else value
        except ValueError:
            raise UsageError(f"{path}:{n}: {key} needs an integer") from None
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="poletabu", description="Tabu search pole-shape optimization")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="run seeded optimizations for one scheme")
    opt.add_argument("--config", help="key=value file; flags override it")
    opt.add_argument("--scheme", help="raw or steps:K (K = 1..4)")
    opt.add_argument("--runs", type=int)
    opt.add_argument("--seed", type=int, help="base seed; runs use seed, seed+1, ...")
    opt.add_argument("--budget", type=int, help="max objective evaluations per run")
    opt.add_argument("--refine", type=int, help="mesh subdivision of the 10 mm grid")
    opt.add_argument("--out", help="output directory")
    opt.add_argument("--workers", type=int, help="threads for candidate evaluation")
    opt.add_argument("--jobs", type=int, help="processes for independent runs")

    rep = sub.add_parser("report", help="rebuild the summary table from an output directory")
    rep.add_argument("--in", dest="in_dir", required=True)

    ev = sub.add_parser("evaluate", help="cost of a single parameter vector")
    ev.add_argument("--scheme", required=True)
    ev.add_argument("--params", required=True, help="comma-separated values in meters")
    ev.add_argument("--refine", type=int, default=2)
    ev.add_argument("--profile", action="store_true", help="also print the face profile")

    for p in (opt, rep, ev):
        p.error = ap.error  # type: ignore[method-assign]
    return ap


def _optimize(args) -> int:
    settings = dict(OPTIMIZE_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in OPTIMIZE_DEFAULTS:
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    try:
        cfg = ExperimentConfig(
            scheme=str(settings["scheme"]),
            runs=int(settings["runs"]),
            seed=int(settings["seed"]),
            budget=int(settings["budget"]),
            mesh=MeshConfig(refine=int(settings["refine"])),
            tabu=replace(TabuConfig(), workers=int(settings["workers"])),
            out_dir=Path(str(settings["out"])),
            jobs=int(settings["jobs"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    records, summary = run_experiment(cfg)
    text, _ = report([summary])
    print(text, end="")
    print(f"artifacts written to {cfg.out_dir}")
    return EXIT_FAILURE if summary.incomplete else EXIT_OK


def _report(args) -> int:
    root = Path(args.in_dir)
    if not root.is_dir():
        raise UsageError(f"{root} is not a directory")
    summaries = summaries_from_dir(root)
    if not summaries:
        raise UsageError(f"no runs found under {root}")
    text, table_csv = report(summaries)
    (root / "summary.csv").write_text(table_csv)
    (root / "table.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _evaluate(args) -> int:
    try:
        space = parse_scheme(args.scheme)
        raw = [float(v) for v in args.params.split(",") if v.strip()]
        params = space.quantize(raw)
        objective = PoleObjective(space, MeshConfig(refine=args.refine))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        value = objective.evaluate(params)
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"params: {','.join(repr(v) for v in params.values)}")
    print(f"cost: {value.cost!r}")
    print(f"b_max: {value.b_max!r}")
    print(f"b_min: {value.b_min!r}")
    if args.profile:
        print(to_profile(space, params).dumps(), end="")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handler = {"optimize": _optimize, "report": _report, "evaluate": _evaluate}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"poletabu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any crash is a run failure
        logging.getLogger(__name__).exception("run failed")
        print(f"poletabu: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
