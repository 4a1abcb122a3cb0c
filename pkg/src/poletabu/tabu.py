"""Tabu search over a parameter lattice.

The underlying heuristic is a Hooke-Jeeves style exploration in which every
axis move is evaluated and the best non-tabu one is taken, even uphill. A
counter of moves without improvement of the best cost drives three staged
actions: intensify (restart at the mean of recent improving points),
diversify (restart at the best of several random points) and step
reduction. The run ends when a reduction is due but every step is already
one lattice quantum.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .objective import EvaluationError
from .param_space import ParamSpace, ShapeParams

logger = logging.getLogger(__name__)

SNAPSHOT_ITERATIONS = (20, 100, 1000)


class SearchControlError(Exception):
    pass


def thresholds(n: int, ceil_half: bool = True) -> tuple[int, int, int]:
    """(intensify, diversify, reduce) counts for an N-parameter problem."""
    half = math.ceil(n / 2) if ceil_half else n // 2
    return max(4, half), max(8, n), max(math.ceil(3 * n / 2), 12)


@dataclass(frozen=True)
class TabuConfig:
    tabu_size: int | None = None  # default 2N
    memory_size: int = 10
    diversify_count: int = 10
    pattern_factor: float = 1.0
    step_fraction: float = 0.2
    ceil_half: bool = True
    restart_at_best_on_reduce: bool = True
    workers: int = 1


class TabuList:
    """FIFO of recently visited lattice points."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("tabu list capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[ShapeParams] = deque(maxlen=capacity)

    def add(self, p: ShapeParams) -> None:
        self._entries.append(p)

    def __contains__(self, p: ShapeParams) -> bool:
        return p in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[ShapeParams]:
        return list(self._entries)

    def age_rank(self, p: ShapeParams) -> int:
        """Position of the oldest occurrence of ``p`` (0 is the oldest entry)."""
        for pos, q in enumerate(self._entries):
            if q == p:
                return pos
        raise KeyError(p)


class IntermediateMemory:
    """Recent points that improved the best-so-far cost."""

    def __init__(self, capacity: int = 10):
        self.capacity = capacity
        self._entries: deque[tuple[ShapeParams, float]] = deque(maxlen=capacity)

    def add(self, p: ShapeParams, cost: float) -> None:
        self._entries.append((p, cost))

    def __len__(self) -> int:
        return len(self._entries)

    def points(self) -> list[ShapeParams]:
        return [p for p, _ in self._entries]


@dataclass(frozen=True)
class Event:
    iteration: int
    eval_count: int
    kind: str
    cost_best: float
    cost_move: float | None = None


@dataclass
class RunRecord:
    seed: int
    scheme: str
    best_trace: list[float] = field(default_factory=list)
    eval_trace: list[int] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    final_params: ShapeParams | None = None
    final_cost: float = math.inf
    eval_count: int = 0
    failures: int = 0
    forced_moves: int = 0
    termination: str = ""

    @property
    def iterations(self) -> int:
        return len(self.best_trace) - 1

    def cost_at(self, iteration: int) -> float:
        """Best cost after ``iteration`` iterations; the final value once the run has ended."""
        return self.best_trace[min(iteration, len(self.best_trace) - 1)]

    @property
    def snapshots(self) -> dict[str, float]:
        snap = {str(it): self.cost_at(it) for it in SNAPSHOT_ITERATIONS}
        snap["final"] = self.final_cost
        return snap

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "eval_count", "event", "cost_best", "cost_move"])
        for e in self.events:
            move = "" if e.cost_move is None else repr(e.cost_move)
            w.writerow([e.iteration, e.eval_count, e.kind, repr(e.cost_best), move])
        return buf.getvalue()

    def convergence_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "eval_count", "best_cost"])
        for it, (ev, c) in enumerate(zip(self.eval_trace, self.best_trace)):
            w.writerow([it, ev, repr(c)])
        return buf.getvalue()


class _Evaluator:
    """Counts requests, maps failures to +inf, and fans out batches in order."""

    def __init__(self, fn: Callable[[ShapeParams], float], workers: int = 1):
        self.fn = fn
        self.count = 0
        self.failures: list[tuple[ShapeParams, str]] = []
        self.on_failure: Callable[[ShapeParams, str], None] | None = None
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def _one(self, p: ShapeParams) -> tuple[float, str | None]:
        try:
            return float(self.fn(p)), None
        except EvaluationError as exc:
            return math.inf, str(exc)

    def many(self, points: Sequence[ShapeParams]) -> list[float]:
        if self._pool is not None and len(points) > 1:
            results = list(self._pool.map(self._one, points))
        else:
            results = [self._one(p) for p in points]
        self.count += len(points)
        out = []
        for p, (cost, err) in zip(points, results):
            if err is not None:
                logger.warning("evaluation failed at %s: %s", p.index, err)
                self.failures.append((p, err))
                if self.on_failure is not None:
                    self.on_failure(p, err)
            out.append(cost)
        return out

    def __call__(self, p: ShapeParams) -> float:
        return self.many([p])[0]

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


def neighborhood(space: ParamSpace, base: ShapeParams, step: Sequence[int]) -> list[ShapeParams]:
    """base -/+ step on each axis, repaired; null and duplicate moves are dropped.

    The order (axis 0 minus, axis 0 plus, axis 1 minus, ...) is the tie-break
    order used by :func:`select_move`.
    """
    seen = {base}
    out = []
    for i in range(space.n):
        for sign in (-1, 1):
            idx = list(base.index)
            idx[i] += sign * int(step[i])
            cand = space.point(space.repair(idx))
            if cand not in seen:
                seen.add(cand)
                out.append(cand)
    return out


def select_move(
    candidates: Sequence[ShapeParams], tabu: TabuList, evaluate_many: Callable
) -> tuple[ShapeParams, float, bool]:
    """Best non-tabu candidate, uphill if need be.

    Returns (point, cost, forced); ``forced`` is true when every candidate was
    tabu and the one held longest in the list was taken.
    """
    if not candidates:
        raise SearchControlError("empty neighborhood")
    costs = evaluate_many(list(candidates))
    best = None
    for k, (c, cost) in enumerate(zip(candidates, costs)):
        if c in tabu:
            continue
        if best is None or cost < costs[best]:
            best = k
    if best is not None:
        return candidates[best], costs[best], False
    k = min(range(len(candidates)), key=lambda k: tabu.age_rank(candidates[k]))
    return candidates[k], costs[k], True


def pattern_move(
    space: ParamSpace,
    old_base: ShapeParams,
    new_base: ShapeParams,
    new_cost: float,
    evaluate: Callable[[ShapeParams], float],
    factor: float = 1.0,
    tabu: TabuList | None = None,
) -> tuple[ShapeParams, float] | None:
    """Extrapolate along new_base - old_base; keep the trial only if it beats new_base."""
    trial_idx = [
        n + int(np.floor(factor * (n - o) + 0.5)) for o, n in zip(old_base.index, new_base.index)
    ]
    trial = space.point(space.repair(trial_idx))
    if trial == new_base or (tabu is not None and trial in tabu):
        return None
    cost = evaluate(trial)
    if cost < new_cost:
        return trial, cost
    return None


def intensify(space: ParamSpace, memory: IntermediateMemory) -> ShapeParams | None:
    """Componentwise mean of the improving points, snapped back onto the lattice."""
    pts = memory.points()
    if not pts:
        return None
    mean = np.mean([p.values for p in pts], axis=0)
    return space.quantize(mean)


def diversify(space: ParamSpace, rng: np.random.Generator, count: int = 10) -> list[ShapeParams]:
    """``count`` uniform random lattice points."""
    if count < 1:
        raise ValueError("diversify count must be >= 1")
    return [space.random_point(rng) for _ in range(count)]


def run_search(
    space: ParamSpace,
    evaluator: Callable[[ShapeParams], float],
    seed: int,
    budget: int | None = 20000,
    config: TabuConfig | None = None,
    start: ShapeParams | None = None,
) -> RunRecord:
    cfg = config or TabuConfig()
    n = space.n
    t_int, t_div, t_red = thresholds(n, cfg.ceil_half)
    rng = np.random.default_rng(seed)
    tabu = TabuList(cfg.tabu_size or 2 * n)
    memory = IntermediateMemory(cfg.memory_size)
    ev = _Evaluator(evaluator, cfg.workers)
    rec = RunRecord(seed=seed, scheme=space.scheme)

    step = list(space.initial_step(cfg.step_fraction))
    iteration = 0
    counter = 0
    best_cost = math.inf

    def log(kind: str, cost_move: float | None = None) -> None:
        rec.events.append(Event(iteration, ev.count, kind, best_cost, cost_move))

    def record_iteration() -> None:
        rec.best_trace.append(best_cost)
        rec.eval_trace.append(ev.count)

    def improve(p: ShapeParams, cost: float) -> bool:
        nonlocal best, best_cost, counter
        if cost < best_cost:
            best, best_cost = p, cost
            memory.add(p, cost)
            counter = 0
            return True
        return False

    ev.on_failure = lambda p, err: log("eval_failed")
    base = start if start is not None else space.random_point(rng)
    best = base
    base_cost = ev(base)
    improve(base, base_cost)
    tabu.add(base)
    log("start", base_cost)
    record_iteration()

    try:
        while True:
            if budget is not None and ev.count >= budget:
                rec.termination = "budget"
                break
            if counter + 1 == t_red and all(s == 1 for s in step):
                log("terminate")
                rec.termination = "natural"
                break
            counter += 1
            iteration += 1

            if counter == t_red:
                step = [max(1, math.ceil(s / 2)) for s in step]
                counter = 0
                if cfg.restart_at_best_on_reduce:
                    base, base_cost = best, best_cost
                log("reduce", base_cost)

            elif counter == t_div:
                pool = [p for p in diversify(space, rng, cfg.diversify_count) if p not in tabu]
                if pool:
                    costs = ev.many(pool)
                    k = int(np.argmin(costs))
                    for p in pool:
                        tabu.add(p)
                    base, base_cost = pool[k], costs[k]
                    improve(base, base_cost)
                    log("diversify", base_cost)
                else:
                    log("diversify")

            elif counter == t_int:
                cand = intensify(space, memory)
                if cand is None or cand in tabu:
                    log("intensify")
                else:
                    base, base_cost = cand, ev(cand)
                    tabu.add(base)
                    improve(base, base_cost)
                    log("intensify", base_cost)

            else:
                cands = neighborhood(space, base, step)
                if not cands:
                    log("move")
                else:
                    old_base = base
                    base, base_cost, forced = select_move(cands, tabu, ev.many)
                    rec.forced_moves += forced
                    tabu.add(base)
                    improved = improve(base, base_cost)
                    log("move", base_cost)
                    if improved:
                        pat = pattern_move(
                            space, old_base, base, base_cost, ev, cfg.pattern_factor, tabu
                        )
                        if pat is not None:
                            record_iteration()
                            iteration += 1
                            base, base_cost = pat
                            tabu.add(base)
                            improve(base, base_cost)
                            log("pattern", base_cost)
            record_iteration()
    finally:
        ev.close()

    rec.final_params = best
    rec.final_cost = best_cost
    rec.eval_count = ev.count
    rec.failures = len(ev.failures)
    return rec
