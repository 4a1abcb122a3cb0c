"""Multi-run experiments, snapshot summary tables and per-run artifacts.

Layout of an experiment directory::

    OUT/<scheme>/run_<seed>/run.csv      iteration,eval_count,best_cost
    OUT/<scheme>/run_<seed>/events.csv   iter,eval_count,event,cost_best,cost_move
    OUT/<scheme>/run_<seed>/profile.txt  r_mm,height_mm (17 lines)
    OUT/<scheme>/run_<seed>/meta.txt     key: value
    OUT/<scheme>/summary.csv             scheme,snapshot,min,max
    OUT/<scheme>/table.txt
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from .mesh import MeshConfig
from .objective import PoleObjective, TargetRegion
from .param_space import ParamSpace, parse_scheme, scheme_slug, to_profile
from .tabu import SNAPSHOT_ITERATIONS, RunRecord, TabuConfig, run_search

logger = logging.getLogger(__name__)

SNAPSHOTS = tuple(str(it) for it in SNAPSHOT_ITERATIONS) + ("final",)


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "steps:2"
    runs: int = 5
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    budget: int | None = 20000
    mesh: MeshConfig = field(default_factory=lambda: MeshConfig(refine=2))
    region: TargetRegion = field(default_factory=TargetRegion)
    tabu: TabuConfig = field(default_factory=TabuConfig)
    out_dir: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        parse_scheme(self.scheme)
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        seeds = self.seed_list()
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")

    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            if len(self.seeds) != self.runs:
                raise ValueError(f"{len(self.seeds)} seeds given for {self.runs} runs")
            return list(self.seeds)
        return [self.seed + i for i in range(self.runs)]

    @property
    def space(self) -> ParamSpace:
        return parse_scheme(self.scheme)


@dataclass
class SchemeSummary:
    scheme: str
    cells: dict[str, tuple[float, float] | None]
    n_runs: int
    n_failed: int = 0

    @property
    def incomplete(self) -> bool:
        return self.n_failed > 0


def summarize(scheme: str, snapshots: Sequence[dict[str, float] | None]) -> SchemeSummary:
    """Min and max of every snapshot column over the successful runs (None marks a failed run)."""
    ok = [s for s in snapshots if s is not None]
    cells: dict[str, tuple[float, float] | None] = {}
    for key in SNAPSHOTS:
        vals = [s[key] for s in ok]
        cells[key] = (min(vals), max(vals)) if vals else None
    return SchemeSummary(scheme, cells, len(snapshots), len(snapshots) - len(ok))


def _run_one(cfg: ExperimentConfig, seed: int) -> RunRecord:
    space = cfg.space
    objective = PoleObjective(space, cfg.mesh, cfg.region)
    return run_search(space, objective, seed, cfg.budget, cfg.tabu)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[RunRecord | None], SchemeSummary]:
    seeds = cfg.seed_list()
    records: list[RunRecord | None] = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            futures = [pool.submit(_run_one, cfg, s) for s in seeds]
            for seed, fut in zip(seeds, futures):
                records.append(_collect(seed, fut.result))
    else:
        for seed in seeds:
            records.append(_collect(seed, lambda: _run_one(cfg, seed)))

    summary = summarize(
        scheme_label(cfg.space), [r.snapshots if r is not None else None for r in records]
    )
    if cfg.out_dir is not None:
        scheme_dir = Path(cfg.out_dir) / scheme_slug(cfg.space)
        for seed, rec in zip(seeds, records):
            if rec is not None:
                dump_artifacts(rec, scheme_dir / f"run_{seed}", cfg)
            else:
                failed = scheme_dir / f"run_{seed}"
                failed.mkdir(parents=True, exist_ok=True)
                (failed / "meta.txt").write_text(
                    f"scheme: {cfg.space.scheme}\nseed: {seed}\nstatus: failed\n"
                )
        table, table_csv = report([summary])
        (scheme_dir / "summary.csv").write_text(table_csv)
        (scheme_dir / "table.txt").write_text(table)
    return records, summary


def _collect(seed: int, get) -> RunRecord | None:
    try:
        return get()
    except Exception:
        logger.exception("run with seed %d failed", seed)
        return None


def scheme_label(space: ParamSpace) -> str:
    return "RAW" if space.scheme == "RAW" else space.scheme[len("STEPS(") : -1]


def milli(cost: float) -> str:
    """cost x 10^3 as an integer, halves rounded away from zero."""
    if not math.isfinite(cost):
        return "inf"
    return str(int((Decimal(repr(cost)) * 1000).quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def _cell(c: tuple[float, float] | None) -> str:
    if c is None:
        return "-"
    return f"{milli(c[0])} - {milli(c[1])}"


def report(summaries: Sequence[SchemeSummary]) -> tuple[str, str]:
    """Aligned text table (cost x 10^3) and CSV with the raw costs."""
    if not summaries:
        raise ValueError("nothing to report")
    header = ["Scheme", "20", "100", "1000", "inf"]
    rows = []
    for s in summaries:
        label = s.scheme + ("*" if s.incomplete else "")
        rows.append([label] + [_cell(s.cells[k]) for k in SNAPSHOTS])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header] + rows]
    if any(s.incomplete for s in summaries):
        lines.append("* some runs failed; cells cover the successful runs only")
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "snapshot", "min", "max"])
    for s in summaries:
        for k in SNAPSHOTS:
            c = s.cells[k]
            w.writerow([s.scheme, k, "" if c is None else repr(c[0]), "" if c is None else repr(c[1])])
    return text, buf.getvalue()


def dump_artifacts(record: RunRecord, run_dir: Path, cfg: ExperimentConfig | None = None) -> None:
    run_dir = Path(run_dir)
    space = cfg.space if cfg is not None else parse_scheme(_slug_to_scheme(record.scheme))
    files = {
        "run.csv": record.convergence_csv(),
        "events.csv": record.events_csv(),
        "profile.txt": to_profile(space, record.final_params).dumps(),
        "meta.txt": _meta(record, cfg),
    }
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (run_dir / name).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write artifacts to {run_dir}: {exc}") from exc


def _slug_to_scheme(scheme: str) -> str:
    return "raw" if scheme == "RAW" else "steps:" + scheme[len("STEPS(") : -1]


def _meta(record: RunRecord, cfg: ExperimentConfig | None) -> str:
    items = [
        ("scheme", record.scheme),
        ("seed", record.seed),
        ("status", "ok"),
        ("termination", record.termination),
        ("iterations", record.iterations),
        ("eval_count", record.eval_count),
        ("failures", record.failures),
        ("forced_moves", record.forced_moves),
        ("final_cost", repr(record.final_cost)),
        ("final_index", ",".join(map(str, record.final_params.index))),
        ("final_values", ",".join(repr(v) for v in record.final_params.values)),
    ]
    if cfg is not None:
        items += [("budget", cfg.budget), ("refine", cfg.mesh.refine)]
    return "".join(f"{k}: {v}\n" for k, v in items)


def read_run_csv(path: Path) -> dict[str, float]:
    """Snapshot values recomputed from a run.csv file."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    costs = [float(r["best_cost"]) for r in rows]
    snap = {str(it): costs[min(it, len(costs) - 1)] for it in SNAPSHOT_ITERATIONS}
    snap["final"] = costs[-1]
    return snap


def _read_meta(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition(": ")
        out[k] = v
    return out


def summaries_from_dir(root: Path) -> list[SchemeSummary]:
    """Rebuild every scheme summary under an experiment directory from its run CSVs."""
    root = Path(root)
    out = []
    for scheme_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        run_dirs = sorted(p for p in scheme_dir.glob("run_*") if (p / "meta.txt").exists())
        if not run_dirs:
            continue
        meta = _read_meta(run_dirs[0] / "meta.txt")
        label = scheme_label(parse_scheme(_slug_to_scheme(meta["scheme"])))
        snaps = [read_run_csv(d / "run.csv") if (d / "run.csv").exists() else None for d in run_dirs]
        out.append(summarize(label, snaps))
    order = {"RAW": 0}
    out.sort(key=lambda s: (order.get(s.scheme, 1), s.scheme))
    return out
