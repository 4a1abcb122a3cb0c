"""Search spaces for pole-face shapes.

Two families are provided: ``RAW`` (16 free face heights) and ``STEPS(k)``
(k break radii plus k plateau heights). Every point lives on an integer
lattice; the search and the tabu memory operate on the integer coordinates
so that equality tests are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MM = 1e-3
HEIGHT_RESOLUTION = 1e-5
HEIGHT_MAX = 40 * MM
RADIUS_RESOLUTION = 10 * MM
POLE_RADIUS = 160 * MM
NODE_SPACING = 10 * MM
NODE_RADII = tuple(i * NODE_SPACING for i in range(17))

_LATTICE_TOL = 1e-12
_HALF_SLACK = 1e-9


@dataclass(frozen=True)
class ShapeParams:
    """A point of a :class:`ParamSpace` lattice.

    ``index`` holds the integer lattice coordinates and defines equality and
    hashing; ``values`` are the corresponding lengths in meters.
    """

    index: tuple[int, ...]
    values: tuple[float, ...] = field(compare=False)

    def __len__(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class ParamSpace:
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    resolution: tuple[float, ...]
    ordering: tuple[tuple[int, int], ...] = ()
    scheme: str = "RAW"
    ramp_nodes: int = 0

    def __post_init__(self):
        n = len(self.names)
        if not (len(self.lower) == len(self.upper) == len(self.resolution) == n):
            raise ValueError("names, lower, upper and resolution must have equal length")
        for i in range(n):
            if not self.lower[i] < self.upper[i]:
                raise ValueError(f"empty range for {self.names[i]!r}")
            if not self.resolution[i] > 0:
                raise ValueError(f"non-positive resolution for {self.names[i]!r}")
            q = (self.upper[i] - self.lower[i]) / self.resolution[i]
            if abs(q - round(q)) * self.resolution[i] > _LATTICE_TOL:
                raise ValueError(f"range of {self.names[i]!r} is not a multiple of its resolution")
        for i, j in self.ordering:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"bad ordering pair {(i, j)}")
        _chains(self.ordering, n)

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def n_quanta(self) -> tuple[int, ...]:
        """Number of resolution steps spanning each axis."""
        return tuple(
            int(round((u - lo) / r)) for lo, u, r in zip(self.lower, self.upper, self.resolution)
        )

    def value(self, i: int, k: int) -> float:
        return self.lower[i] + k * self.resolution[i]

    def point(self, index: Sequence[int]) -> ShapeParams:
        """Wrap integer lattice coordinates; no repair is applied."""
        index = tuple(int(k) for k in index)
        if len(index) != self.n:
            raise ValueError(f"expected {self.n} coordinates, got {len(index)}")
        return ShapeParams(index, tuple(self.value(i, k) for i, k in enumerate(index)))

    def is_valid(self, p: ShapeParams) -> bool:
        if len(p.index) != self.n:
            return False
        if any(k < 0 or k > m for k, m in zip(p.index, self.n_quanta)):
            return False
        return all(p.values[i] < p.values[j] for i, j in self.ordering)

    def initial_step(self, fraction: float = 0.2) -> tuple[int, ...]:
        """Starting step in lattice quanta: ``fraction`` of each range, at least one quantum."""
        return tuple(max(1, int(round(fraction * m))) for m in self.n_quanta)

    def repair(self, index: Sequence[int]) -> tuple[int, ...]:
        """Clamp to bounds, then project onto the ordering constraints."""
        q = self.n_quanta
        idx = [min(max(int(k), 0), m) for k, m in zip(index, q)]
        for chain in _chains(self.ordering, self.n):
            for pos, k in zip(chain, _project_chain(self, chain, [idx[c] for c in chain])):
                idx[pos] = k
        return tuple(idx)

    def quantize(self, raw: Sequence[float]) -> ShapeParams:
        if len(raw) != self.n:
            raise ValueError(f"expected {self.n} values, got {len(raw)}")
        # floor(x + 0.5) instead of round(): no banker's rounding on exact halves.
        # The slack keeps decimal halves such as 45 mm / 10 mm from landing on 4.4999...
        idx = [
            int(np.floor((float(x) - lo) / r + 0.5 + _HALF_SLACK))
            for x, lo, r in zip(raw, self.lower, self.resolution)
        ]
        return self.point(self.repair(idx))

    def random_point(self, rng: np.random.Generator, attempts: int = 100) -> ShapeParams:
        """Uniform lattice point; rejection sampling with a repair fallback."""
        q = np.asarray(self.n_quanta)
        idx = rng.integers(0, q + 1)
        for _ in range(attempts):
            p = self.point(idx)
            if self.is_valid(p):
                return p
            idx = rng.integers(0, q + 1)
        return self.point(self.repair(idx))


def _chains(ordering: Sequence[tuple[int, int]], n: int) -> list[list[int]]:
    """Split ordering pairs into disjoint chains i0 < i1 < ...; reject anything else."""
    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    for i, j in ordering:
        if i in succ or j in pred:
            raise ValueError("ordering pairs must form disjoint chains")
        succ[i] = j
        pred[j] = i
    chains = []
    for head in sorted(set(succ) - set(pred)):
        chain = [head]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(chain)
    if sum(len(c) for c in chains) != len(set(succ) | set(pred)):
        raise ValueError("ordering relation is cyclic")
    return chains


def _project_chain(space: ParamSpace, chain: list[int], idx: list[int]) -> list[int]:
    """Nearest point (L1, meters) satisfying v[c0] < v[c1] < ... on the chain.

    Dynamic program over each member's own lattice. Among equally distant
    points the one with the smallest later-indexed values wins, scanning from
    the last chain member backwards.
    """
    values = [space.lower[c] + np.arange(space.n_quanta[c] + 1) * space.resolution[c] for c in chain]
    cost = np.abs(values[0] - values[0][idx[0]])
    tables = [cost]
    for m in range(1, len(chain)):
        prev_vals = values[m - 1]
        prefix_min = np.minimum.accumulate(tables[-1])
        # number of predecessor values strictly below each current value
        n_below = np.searchsorted(prev_vals, values[m] - _LATTICE_TOL, side="left")
        best_prev = np.where(n_below > 0, prefix_min[np.maximum(n_below - 1, 0)], np.inf)
        tables.append(np.abs(values[m] - values[m][idx[m]]) + best_prev)
    if not np.isfinite(tables[-1]).any():
        raise ValueError("ordering constraints are infeasible within bounds")

    out = [0] * len(chain)
    total = tables[-1]
    k = int(np.flatnonzero(total <= total.min() + _LATTICE_TOL)[0])
    out[-1] = k
    for m in range(len(chain) - 1, 0, -1):
        limit = np.searchsorted(values[m - 1], values[m][k] - _LATTICE_TOL, side="left")
        sub = tables[m - 1][:limit]
        k = int(np.flatnonzero(sub <= sub.min() + _LATTICE_TOL)[0])
        out[m - 1] = k
    return out


def make_raw_space() -> ParamSpace:
    """16 face heights at r = 10..160 mm; the axis node follows the 10 mm value."""
    names = tuple(f"h{int(round(r / MM))}" for r in NODE_RADII[1:])
    return ParamSpace(
        names=names,
        lower=(0.0,) * 16,
        upper=(HEIGHT_MAX,) * 16,
        resolution=(HEIGHT_RESOLUTION,) * 16,
        scheme="RAW",
    )


def make_steps_space(k: int, ramp_nodes: int = 0) -> ParamSpace:
    """k ordered break radii followed by k plateau heights.

    Radius ``i`` (0-based) spans [10*i, 160 - 10*(k-1-i)] mm, except that the
    outermost radius never drops below 10 mm. For k=2 that is a in [0, 150],
    b in [10, 160] with a < b.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 4:
        raise ValueError(f"steps scheme needs 1 <= k <= 4, got {k!r}")
    k = int(k)
    r_lower = [i * RADIUS_RESOLUTION for i in range(k)]
    r_lower[-1] = max(r_lower[-1], RADIUS_RESOLUTION)
    r_upper = [POLE_RADIUS - (k - 1 - i) * RADIUS_RESOLUTION for i in range(k)]
    if k == 2:
        names = ("a", "b", "c", "d")
    else:
        names = tuple(f"r{i + 1}" for i in range(k)) + tuple(f"h{i + 1}" for i in range(k))
    return ParamSpace(
        names=names,
        lower=tuple(r_lower) + (0.0,) * k,
        upper=tuple(r_upper) + (HEIGHT_MAX,) * k,
        resolution=(RADIUS_RESOLUTION,) * k + (HEIGHT_RESOLUTION,) * k,
        ordering=tuple((i, i + 1) for i in range(k - 1)),
        scheme=f"STEPS({k})",
        ramp_nodes=ramp_nodes,
    )


def parse_scheme(text: str) -> ParamSpace:
    """``raw`` or ``steps:K``."""
    t = text.strip().lower()
    if t == "raw":
        return make_raw_space()
    if t.startswith("steps:"):
        return make_steps_space(int(t.split(":", 1)[1]))
    raise ValueError(f"unknown scheme {text!r}; expected 'raw' or 'steps:K'")


def scheme_slug(space: ParamSpace) -> str:
    if space.scheme == "RAW":
        return "raw"
    return "steps" + space.scheme[len("STEPS(") : -1]


def quantize(space: ParamSpace, raw: Sequence[float]) -> ShapeParams:
    return space.quantize(raw)


@dataclass(frozen=True)
class PoleProfile:
    """Face heights at the 17 node radii 0, 10, ..., 160 mm."""

    heights: tuple[float, ...]

    def __post_init__(self):
        if len(self.heights) != len(NODE_RADII):
            raise ValueError(f"profile needs {len(NODE_RADII)} heights")
        for h in self.heights:
            if not -_LATTICE_TOL <= h <= HEIGHT_MAX + _LATTICE_TOL:
                raise ValueError(f"height {h!r} outside [0, 40 mm]")

    @property
    def radii(self) -> tuple[float, ...]:
        return NODE_RADII

    def dumps(self) -> str:
        return "".join(
            f"{r / MM:.3f},{h / MM:.3f}\n" for r, h in zip(NODE_RADII, self.heights)
        )

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def flat_profile(height: float = 0.0) -> PoleProfile:
    return PoleProfile((height,) * len(NODE_RADII))


def to_profile(space: ParamSpace, p: ShapeParams) -> PoleProfile:
    if len(p.values) != space.n:
        raise ValueError(f"parameter arity {len(p.values)} does not match space ({space.n})")
    if space.scheme == "RAW":
        return PoleProfile((p.values[0],) + tuple(p.values))

    k = space.n // 2
    radii = p.values[:k]
    heights = p.values[k:]
    # plateau i covers [radii[i-1], radii[i]); nodes at or beyond radii[-1] are 0
    node_idx = [int(round(r / NODE_SPACING)) for r in radii]
    steps = []
    for j in range(len(NODE_RADII)):
        level = 0.0
        for i, edge in enumerate(node_idx):
            if j < edge:
                level = heights[i]
                break
        steps.append(level)
    # axis node follows the 10 mm node, as in RAW, so STEPS stays a subspace of RAW
    steps[0] = steps[1]
    if space.ramp_nodes <= 0:
        return PoleProfile(tuple(steps))
    return PoleProfile(tuple(_ramp(steps, space.ramp_nodes)))


def _ramp(steps: list[float], width: int) -> list[float]:
    """Replace each jump with a linear ramp ending at the break node."""
    out = list(steps)
    for j in range(1, len(steps)):
        if steps[j] != steps[j - 1]:
            lo = max(0, j - width)
            left, right = steps[lo], steps[j]
            for m in range(lo + 1, j):
                t = (m - lo) / (j - lo)
                out[m] = left + t * (right - left)
    return out
