"""Path functionals and empirical comparisons.

``count_transitions`` and ``occupation_time`` are the two functionals used to
compare tracked and limit single-molecule paths; ``distances`` reports total
variation for discrete samples and the Kolmogorov-Smirnov statistic for
continuous ones.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ssa import JumpPath

__all__ = [
    "EmpiricalDistribution",
    "count_transitions",
    "occupation_time",
    "survival_curve",
    "distances",
    "tv_distance",
    "ks_distance",
]


def count_transitions(path: JumpPath, source: int, target: int) -> int:
    """Number of jumps from ``source`` straight to ``target``."""
    if path.n_jumps == 0:
        return 0
    pre = path.pre_states()
    return int(np.count_nonzero((pre == source) & (path.post_states == target)))


def occupation_time(path: JumpPath, statuses, T: float | None = None) -> float:
    """Time spent in ``statuses`` during ``[0, T]``."""
    T = path.horizon if T is None else float(T)
    if T > path.horizon or T < 0:
        raise ValueError(f"T must lie in [0, {path.horizon}]")
    if isinstance(statuses, (int, np.integer)):
        statuses = [statuses]
    wanted = np.array(sorted({int(s) for s in statuses}), np.int64)
    keep = path.jump_times <= T
    starts = np.concatenate([[0.0], path.jump_times[keep]])
    ends = np.append(starts[1:], T)
    states = np.concatenate([[int(path.initial_state)], path.post_states[keep]])
    inside = np.isin(states, wanted)
    return float(np.sum((ends - starts)[inside]))


def survival_curve(paths, initial: int, grid) -> np.ndarray:
    """Fraction of paths still in ``initial`` without ever having left it."""
    paths = list(paths)
    if not paths:
        raise ValueError("empty ensemble")
    grid = np.asarray(grid, dtype=float)
    first = np.empty(len(paths))
    for i, p in enumerate(paths):
        if int(p.initial_state) != int(initial):
            raise ValueError(f"path {i} does not start in status {initial}")
        first[i] = p.jump_times[0] if p.n_jumps else np.inf
    first.sort()
    left = np.searchsorted(first, grid, side="right")
    return 1.0 - left / len(paths)


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Discrete counts or continuous samples of a path functional."""

    kind: str
    counts: dict | None = None
    samples: np.ndarray | None = None

    @classmethod
    def discrete(cls, values) -> "EmpiricalDistribution":
        c = Counter(int(v) for v in values)
        return cls("discrete", counts=dict(sorted(c.items())))

    @classmethod
    def continuous(cls, values) -> "EmpiricalDistribution":
        s = np.sort(np.asarray(values, dtype=float))
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        return cls("continuous", samples=s)

    @property
    def size(self) -> int:
        return sum(self.counts.values()) if self.kind == "discrete" else len(self.samples)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if self.kind == "discrete":
                w.writerow(["value", "count"])
                w.writerows(self.counts.items())
            else:
                w.writerow(["sample"])
                w.writerows([repr(float(v))] for v in self.samples)
        return path


def tv_distance(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("empty distribution")
    keys = set(a.counts) | set(b.counts)
    return 0.5 * sum(abs(a.counts.get(k, 0) / na - b.counts.get(k, 0) / nb) for k in keys)


def ks_distance(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    if a.size == 0 or b.size == 0:
        raise ValueError("empty distribution")
    pts = np.concatenate([a.samples, b.samples])
    fa = np.searchsorted(a.samples, pts, side="right") / a.size
    fb = np.searchsorted(b.samples, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def distances(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """TV for discrete functionals, KS for continuous ones."""
    if a.kind != b.kind:
        raise TypeError(f"cannot compare a {a.kind} with a {b.kind} distribution")
    return tv_distance(a, b) if a.kind == "discrete" else ks_distance(a, b)
