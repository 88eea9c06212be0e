"""Partitions of a finite horizon and piecewise-constant test functions.

A partition is a strictly increasing grid 0 = t_0 < ... < t_N; the last point
is the horizon and every test function must be supported inside it (all
contributions beyond the horizon are vacuum factors equal to 1).  Step
functions take values in C^d and are implicitly zero after their last
breakpoint.  All breakpoint arithmetic runs over exact union grids; time
points are matched with tolerance TIME_TOL and never produced by floating
accumulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

TIME_TOL = 1e-12


def _as_times(times: Iterable[float]) -> np.ndarray:
    t = np.asarray(list(times), dtype=float)
    if t.ndim != 1:
        raise ValueError("times must be a flat sequence")
    return t


@dataclass(frozen=True)
class Partition:
    """Strictly increasing grid of times starting at 0; horizon = last time."""

    times: tuple[float, ...]

    def __init__(self, times: Iterable[float]):
        t = _as_times(times)
        if t.size < 2:
            raise ValueError("a partition needs at least one cell")
        if abs(t[0]) > TIME_TOL:
            raise ValueError(f"partition must start at 0, got {t[0]}")
        if np.any(np.diff(t) <= TIME_TOL):
            raise ValueError("partition times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def uniform(cls, horizon: float, cells: int) -> "Partition":
        return cls([horizon * k / cells for k in range(cells + 1)])

    @classmethod
    def dyadic(cls, horizon: float, level: int) -> "Partition":
        return cls.uniform(horizon, 2**level)

    @property
    def horizon(self) -> float:
        return self.times[-1]

    @property
    def n_cells(self) -> int:
        return len(self.times) - 1

    @property
    def widths(self) -> np.ndarray:
        t = np.asarray(self.times)
        return np.diff(t)

    def floor_time(self, t: float) -> float:
        """Largest partition point <= t (the horizon for t beyond it)."""
        return self.times[self.floor_index(t)]

    def floor_index(self, t: float) -> int:
        times = np.asarray(self.times)
        idx = int(np.searchsorted(times, t + TIME_TOL) - 1)
        return min(max(idx, 0), len(self.times) - 1)

    def complete_cells(self, t: float) -> int:
        """Number of cells [t_m, t_m+1) with t_m+1 <= t (ties included)."""
        return self.floor_index(t)

    def cell_of(self, t: float) -> int:
        """Index of the cell containing t; the last cell for t >= horizon."""
        return min(self.floor_index(t), self.n_cells - 1)

    def to_json(self) -> dict:
        return {"breakpoints": list(self.times)}

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        return cls(obj["breakpoints"])


def mesh(partition: Partition) -> float:
    """Largest cell width; the refinement limit is mesh -> 0."""
    return float(np.max(partition.widths))


def refines(sigma: Partition, tau: Partition) -> bool:
    """Whether sigma refines tau (every tau point occurs in sigma).

    Both partitions must share the horizon; anything else is a usage error.
    """
    if abs(sigma.horizon - tau.horizon) > TIME_TOL:
        raise ValueError(
            f"horizon mismatch: {sigma.horizon} vs {tau.horizon}"
        )
    s = np.asarray(sigma.times)
    for t in tau.times:
        i = np.searchsorted(s, t - TIME_TOL)
        if i >= s.size or abs(s[i] - t) > TIME_TOL:
            return False
    return True


def union_times(*groups: Iterable[float]) -> np.ndarray:
    """Sorted union of time points, deduplicated at TIME_TOL."""
    merged = np.sort(np.concatenate([np.asarray(list(g), dtype=float) for g in groups]))
    keep = [merged[0]]
    for t in merged[1:]:
        if t - keep[-1] > TIME_TOL:
            keep.append(t)
    return np.asarray(keep)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function [0, inf) -> C^d, zero outside its cells.

    breakpoints has one more entry than values; value k holds on
    [breakpoints[k], breakpoints[k+1]).
    """

    breakpoints: tuple[float, ...]
    values: np.ndarray  # (cells, d) complex

    def __init__(self, breakpoints: Iterable[float], values):
        b = _as_times(breakpoints)
        v = np.asarray(values, dtype=np.complex128)
        if v.ndim == 1:
            v = v[:, None]  # flat list of scalars = cells of a d = 1 function
        if b.size != v.shape[0] + 1:
            raise ValueError(
                f"breakpoint count {b.size} != value count {v.shape[0]} + 1"
            )
        if b[0] < -TIME_TOL:
            raise ValueError("support must lie in [0, inf)")
        if np.any(np.diff(b) <= TIME_TOL):
            raise ValueError("breakpoints must be strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, d: int = 1) -> "StepFunction":
        return cls([0.0, 1.0], np.zeros((1, d)))

    @classmethod
    def indicator(cls, a: float, b: float, value=1.0) -> "StepFunction":
        """Constant (scalar or C^d) value on [a, b), zero elsewhere."""
        val = np.atleast_1d(np.asarray(value, dtype=np.complex128))
        return cls([a, b], val.reshape(1, -1))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def support_end(self) -> float:
        return self.breakpoints[-1]

    def value_at(self, t: float) -> np.ndarray:
        b = np.asarray(self.breakpoints)
        if t < b[0] - TIME_TOL or t >= b[-1] - TIME_TOL:
            return np.zeros(self.d, dtype=np.complex128)
        k = int(np.searchsorted(b, t + TIME_TOL) - 1)
        k = min(max(k, 0), self.values.shape[0] - 1)
        return self.values[k]

    def values_on(self, grid: np.ndarray) -> np.ndarray:
        """Cell values on a grid refining the breakpoints, shape (len-1, d)."""
        pts = np.asarray(grid)[:-1]
        b = np.asarray(self.breakpoints)
        k = np.clip(np.searchsorted(b, pts + TIME_TOL) - 1, 0, self.values.shape[0] - 1)
        out = self.values[k].copy()
        out[(pts < b[0] - TIME_TOL) | (pts >= b[-1] - TIME_TOL)] = 0.0
        return out

    def __add__(self, other: "StepFunction") -> "StepFunction":
        grid = union_times(self.breakpoints, other.breakpoints)
        return StepFunction(grid, self.values_on(grid) + other.values_on(grid))

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "StepFunction":
        return StepFunction(self.breakpoints, scalar * self.values)

    def to_json(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "values": [[[z.real, z.imag] for z in row] for row in self.values],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StepFunction":
        vals = [[complex(re, im) for re, im in row] for row in obj["values"]]
        return cls(obj["breakpoints"], np.asarray(vals, dtype=np.complex128))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def coarse_grain(f: StepFunction, partition: Partition) -> np.ndarray:
    """Cell vectors f_tau(n) = (width_n)^(-1/2) * integral of f over cell n.

    These are the site vectors' particle parts of the embedded exponential.
    f must be supported inside the horizon.
    """
    if f.support_end > partition.horizon + TIME_TOL and np.any(f.values):
        raise ValueError("step function support exceeds the partition horizon")
    sums = _cell_integrals(f, np.asarray(partition.times))
    return sums / np.sqrt(partition.widths)[:, None]


def _cell_integrals(f: StepFunction, grid: np.ndarray) -> np.ndarray:
    """Exact integral of f over each cell of an arbitrary increasing grid."""
    union = union_times(grid, f.breakpoints)
    widths = np.diff(union)
    vals = f.values_on(union)
    seg = vals * widths[:, None]
    # accumulate union segments into target cells
    starts = 0.5 * (union[:-1] + union[1:])
    idx = np.searchsorted(grid, starts) - 1
    out = np.zeros((grid.size - 1, f.d), dtype=np.complex128)
    inside = (idx >= 0) & (idx < grid.size - 1)
    np.add.at(out, idx[inside], seg[inside])
    return out


def project(f: StepFunction, partition: Partition) -> StepFunction:
    """Conditional expectation onto the partition: cellwise average of f."""
    sums = _cell_integrals(f, np.asarray(partition.times))
    return StepFunction(partition.times, sums / partition.widths[:, None])


def l2_inner(f: StepFunction, g: StepFunction) -> complex:
    """Integral of <f(t), g(t)> dt, conjugate-linear in f; exact."""
    return cumulative_inner(f, g, max(f.support_end, g.support_end))


def cumulative_inner(f: StepFunction, g: StepFunction, s: float) -> complex:
    """Integral of <f(t), g(t)> over [0, s); exact piecewise evaluation."""
    if s <= TIME_TOL:
        return 0.0 + 0.0j
    grid = union_times(f.breakpoints, g.breakpoints, [0.0, s])
    grid = grid[grid <= s + TIME_TOL]
    if grid[-1] < s - TIME_TOL:
        grid = np.append(grid, s)
    fv = f.values_on(grid)
    gv = g.values_on(grid)
    return complex(np.sum(np.diff(grid)[:, None] * fv.conj() * gv))


def l2_norm(f: StepFunction) -> float:
    return float(np.sqrt(max(l2_inner(f, f).real, 0.0)))


def exp_inner(f: StepFunction, g: StepFunction) -> complex:
    """Exponential-vector overlap exp(integral <f, g>)."""
    return complex(np.exp(l2_inner(f, g)))
