"""Limit single-molecule process driven by the fluid trajectory.

In the large-volume limit a tracked molecule in status ``tau`` moves to
``tau'`` through reaction ``y -> y'`` at rate

    p(tau, tau') * y_s * lambda(Z(t)) / Z_s(t),     s = sigma(tau).

Under mass-action one factor ``z_s`` cancels, leaving the monomial
``p * y_s * kappa * z**(y - e_s)``, which is what the table stores.

Paths are drawn by thinning against a piecewise-constant majorant: on every
fluid grid cell the majorant is 1.05 times the largest total hazard seen on a
dense sampling of that cell. Candidate times come from inverting the
cumulative majorant; a candidate at time ``t`` is accepted with probability
``h(t) / M`` and the destination is chosen proportionally to the individual
rates at ``t`` with the same uniform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .fluid import FluidSolution
from .network import DELTA, AugmentedNetwork, deterministic_rate
from .rng import INITIAL, SINGLE, check_seed, stream
from .ssa import JumpPath, _pmap, resolve_tau0

__all__ = [
    "LimitRate",
    "LimitRateTable",
    "SingleMoleculeError",
    "build_limit_rates",
    "hazard",
    "simulate_y",
    "simulate_y_batch",
    "MIN_COMPONENT_FLOOR",
    "MAJORANT_SLACK",
    "BLOCK_SIZE",
]

MIN_COMPONENT_FLOOR = 1e-8
MAJORANT_SLACK = 1.05
BLOCK_SIZE = 256
_REFINE = 10


class SingleMoleculeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LimitRate:
    """One tracked reaction of the limit process.

    ``multiplier`` is ``y_s * p``. ``exponents`` is ``y - e_s`` for mass-action
    and ``None`` for custom kinetics.
    """

    source: int
    target: int
    reaction: int
    multiplier: float
    exponents: np.ndarray | None
    kappa: float


@dataclass(frozen=True, eq=False)
class LimitRateTable:
    aug: AugmentedNetwork
    entries: tuple
    floor: float = MIN_COMPONENT_FLOOR

    @property
    def schema(self):
        return self.aug.schema

    @property
    def n_statuses(self) -> int:
        return self.aug.schema.n_statuses

    def ratio_rate(self, k: int, z) -> float:
        """Unsimplified ``multiplier * lambda(z) / z_s``."""
        e = self.entries[k]
        z = np.asarray(z, dtype=float)
        zs = z[self.schema.sigma[e.source]]
        if not zs > self.floor:
            raise SingleMoleculeError(
                f"concentration of {self.aug.base.species[self.schema.sigma[e.source]]!r} "
                f"is {zs:.3g}, at or below the floor {self.floor:g}"
            )
        return e.multiplier * deterministic_rate(self.aug.base, e.reaction, z) / zs

    def rate(self, k: int, z) -> float:
        e = self.entries[k]
        if e.exponents is None:
            return self.ratio_rate(k, z)
        z = np.asarray(z, dtype=float)
        v = e.multiplier * e.kappa
        for s, c in enumerate(e.exponents):
            for _ in range(int(c)):
                v *= z[s]
        return float(v)

    def rates_many(self, k: int, z) -> np.ndarray:
        """Rate of entry ``k`` at every row of ``z``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        e = self.entries[k]
        if e.exponents is None:
            return np.array([self.ratio_rate(k, row) for row in z])
        out = np.full(z.shape[0], e.multiplier * e.kappa)
        for s, c in enumerate(e.exponents):
            for _ in range(int(c)):
                out = out * z[:, s]
        return out

    def moving(self, tau: int) -> list[int]:
        """Entries leaving ``tau`` for a different status."""
        return [k for k, e in enumerate(self.entries) if e.source == tau and e.target != tau]

    def total(self, tau: int, z) -> float:
        if tau == DELTA:
            return 0.0
        out = 0.0
        for k in self.moving(tau):
            out += self.rate(k, z)
        return out


def build_limit_rates(aug: AugmentedNetwork, floor: float = MIN_COMPONENT_FLOOR) -> LimitRateTable:
    net, schema = aug.base, aug.schema
    entries = []
    for tr in aug.tracked:
        s = schema.sigma[tr.source]
        y = net.reactions[tr.reaction].reactant
        ys = y[s]
        if ys <= 0 or tr.probability <= 0:
            continue
        if net.is_mass_action:
            expo = y.vector(net.dim).astype(np.int64)
            expo[s] -= 1
            expo.setflags(write=False)
        else:
            expo = None
        entries.append(
            LimitRate(
                tr.source, tr.target, tr.reaction, float(ys * tr.probability), expo,
                float(net.reactions[tr.reaction].rate_constant),
            )
        )
    return LimitRateTable(aug, tuple(entries), floor)


def hazard(table: LimitRateTable, sol: FluidSolution, tau: int, t: float) -> float:
    """Total rate of leaving ``tau`` at time ``t``; zero for DELTA."""
    z = sol.eval(t)
    if tau == DELTA:
        return 0.0
    return table.total(tau, z)


# ---------------------------------------------------------------- thinning


@numba.njit(cache=True, inline="always")
def _herm(t0, t1, y0, y1, d0, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    return (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * d0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * d1
    )


@numba.njit(cache=True, nogil=True)
def _thin_block(grid, values, derivs, start, end, dst, coef, expo, M, C, tau0s, T, gen):
    n_cells = grid.shape[0] - 1
    d = values.shape[1]
    z = np.empty(d)
    n_paths = tau0s.shape[0]
    cap = 16 * n_paths + 16
    times = np.empty(cap)
    vals = np.empty(cap, np.int64)
    offsets = np.zeros(n_paths + 1, np.int64)
    nrec = 0
    m = dst.shape[0]
    rates = np.empty(max(m, 1))
    for p in range(n_paths):
        status = tau0s[p]
        t = 0.0
        k = 0
        while status >= 0 and end[status] > start[status]:
            ct = C[status, k] + M[status, k] * (t - grid[k])
            target = ct - math.log1p(-gen.random())
            if target >= C[status, n_cells]:
                break
            lo = k
            hi = n_cells
            # last cell whose cumulative start is <= target
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if C[status, mid] <= target:
                    lo = mid
                else:
                    hi = mid
            k = lo
            while M[status, k] <= 0.0 and k < n_cells - 1:
                k += 1
            t_new = grid[k] + (target - C[status, k]) / M[status, k]
            if t_new < grid[k]:
                t_new = grid[k]
            if t_new > grid[k + 1]:
                t_new = grid[k + 1]
            if t_new > T:
                break
            t = t_new
            for s in range(d):
                z[s] = _herm(grid[k], grid[k + 1], values[k, s], values[k + 1, s], derivs[k, s], derivs[k + 1, s], t)
            h = 0.0
            for e in range(start[status], end[status]):
                v = coef[e]
                for s in range(d):
                    for _ in range(expo[e, s]):
                        v *= z[s]
                rates[e] = v
                h += v
            if not h <= M[status, k] or not math.isfinite(h):
                return times, vals, offsets, p + 1
            u = gen.random() * M[status, k]
            if u < h:
                cum = 0.0
                new = dst[end[status] - 1]
                for e in range(start[status], end[status]):
                    cum += rates[e]
                    if u < cum:
                        new = dst[e]
                        break
                status = new
                if nrec == times.shape[0]:
                    t2 = np.empty(2 * nrec)
                    v2 = np.empty(2 * nrec, np.int64)
                    t2[:nrec] = times
                    v2[:nrec] = vals
                    times = t2
                    vals = v2
                times[nrec] = t
                vals[nrec] = status
                nrec += 1
        offsets[p + 1] = nrec
    return times[:nrec].copy(), vals[:nrec].copy(), offsets, 0


def _thin_block_python(table, sol, order, M, C, tau0s, T, gen):
    """Reference thinning for any kinetics; same draws as the kernel."""
    grid, values, derivs = sol.grid, sol.values, sol.derivs
    n_cells = len(grid) - 1
    times, vals, offsets = [], [], [0]
    for tau0 in tau0s:
        status = int(tau0)
        t = 0.0
        k = 0
        while status >= 0 and order[status]:
            ct = C[status, k] + M[status, k] * (t - grid[k])
            target = ct - math.log1p(-gen.random())
            if target >= C[status, n_cells]:
                break
            k = max(k, int(np.searchsorted(C[status], target, side="right")) - 1)
            k = min(k, n_cells - 1)
            while M[status, k] <= 0.0 and k < n_cells - 1:
                k += 1
            t_new = min(max(grid[k] + (target - C[status, k]) / M[status, k], grid[k]), grid[k + 1])
            if t_new > T:
                break
            t = t_new
            z = np.array([
                _herm.py_func(grid[k], grid[k + 1], values[k, s], values[k + 1, s], derivs[k, s], derivs[k + 1, s], t)
                for s in range(values.shape[1])
            ])
            rates = [table.rate(e, z) for e in order[status]]
            h = 0.0
            for v in rates:
                h += v
            if not h <= M[status, k] or not math.isfinite(h):
                raise SingleMoleculeError("majorant construction failure: hazard exceeds its majorant")
            u = gen.random() * M[status, k]
            if u < h:
                cum = 0.0
                new = table.entries[order[status][-1]].target
                for e, v in zip(order[status], rates):
                    cum += v
                    if u < cum:
                        new = table.entries[e].target
                        break
                status = new
                times.append(t)
                vals.append(status)
        offsets.append(len(times))
    return np.array(times, float), np.array(vals, np.int64), np.array(offsets, np.int64), 0


@dataclass(frozen=True, eq=False)
class _Majorant:
    order: list
    start: np.ndarray
    end: np.ndarray
    dst: np.ndarray
    coef: np.ndarray
    expo: np.ndarray
    M: np.ndarray
    C: np.ndarray


def _majorant(table: LimitRateTable, sol: FluidSolution) -> _Majorant:
    if sol.n_cells == 0:
        raise SingleMoleculeError("fluid solution has zero length")
    if not sol.min_component > table.floor:
        raise SingleMoleculeError(
            f"fluid minimum component {sol.min_component:.3g} is at or below the floor {table.floor:g}"
        )
    n, d = sol.n_cells, sol.values.shape[1]
    _, z = sol.refined(_REFINE)
    m = table.n_statuses
    order = [table.moving(tau) for tau in range(m)]
    M = np.zeros((m, n))
    for tau in range(m):
        if not order[tau]:
            continue
        h = np.zeros(z.shape[0])
        for k in order[tau]:
            h = h + table.rates_many(k, z)
        if not np.all(np.isfinite(h)):
            raise SingleMoleculeError("majorant construction failure: non-finite rate")
        body = h[:-1].reshape(n, _REFINE)
        cell_max = np.maximum(body.max(axis=1), h[_REFINE::_REFINE])
        M[tau] = MAJORANT_SLACK * cell_max
    widths = np.diff(sol.grid)
    C = np.zeros((m, n + 1))
    C[:, 1:] = np.cumsum(M * widths[None, :], axis=1)
    flat = [k for tau in range(m) for k in order[tau]]
    start = np.zeros(m, np.int64)
    end = np.zeros(m, np.int64)
    pos = 0
    for tau in range(m):
        start[tau] = pos
        pos += len(order[tau])
        end[tau] = pos
    dst = np.array([table.entries[k].target for k in flat] or [DELTA], np.int64)
    coef = np.array([table.entries[k].multiplier * table.entries[k].kappa for k in flat] or [0.0])
    if flat and table.entries[flat[0]].exponents is not None:
        expo = np.stack([table.entries[k].exponents for k in flat]).astype(np.int64)
    else:
        expo = np.zeros((max(len(flat), 1), d), np.int64)
    return _Majorant(order, start, end, dst, coef, expo, M, C)


def _simulate_block(table, sol, maj, tau0s, T, gen, engine):
    mass_action = table.aug.base.is_mass_action
    if engine not in ("auto", "numba", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "python" or not mass_action:
        times, vals, offsets, _ = _thin_block_python(table, sol, maj.order, maj.M, maj.C, tau0s, T, gen)
    else:
        times, vals, offsets, bad = _thin_block(
            sol.grid, np.ascontiguousarray(sol.values), np.ascontiguousarray(sol.derivs),
            maj.start, maj.end, maj.dst, maj.coef, maj.expo, maj.M, maj.C,
            np.ascontiguousarray(tau0s, dtype=np.int64), float(T), gen,
        )
        if bad:
            raise SingleMoleculeError("majorant construction failure: hazard exceeds its majorant")
    return [
        JumpPath(int(tau0s[i]), times[offsets[i]:offsets[i + 1]], vals[offsets[i]:offsets[i + 1]], float(T))
        for i in range(len(tau0s))
    ]


def _horizon(sol, T):
    if T is None:
        return sol.T
    T = float(T)
    if not 0 < T <= sol.T:
        raise ValueError(f"T must lie in (0, {sol.T}]")
    return T


def simulate_y(
    table: LimitRateTable, sol: FluidSolution, tau0, T=None, seed=0, *, traj_id=0, engine="auto"
) -> JumpPath:
    """One path of the limit process started at ``tau0``."""
    check_seed(seed)
    T = _horizon(sol, T)
    tau = resolve_tau0(table.schema, tau0)
    if isinstance(tau, tuple):
        raise ValueError("simulate_y needs a single initial status; use simulate_y_batch for a distribution")
    maj = _majorant(table, sol)
    gen = stream(seed, traj_id, SINGLE)
    return _simulate_block(table, sol, maj, np.array([tau], np.int64), T, gen, engine)[0]


def simulate_y_batch(
    table: LimitRateTable,
    sol: FluidSolution,
    tau0,
    n: int,
    seed=0,
    *,
    T=None,
    threads=1,
    block=BLOCK_SIZE,
    engine="auto",
) -> list[JumpPath]:
    """``n`` independent limit paths.

    ``tau0`` is a status, a distribution over statuses, or an integer array
    of length ``n`` giving each path's start. Paths are simulated in blocks of
    ``block``; block ``b`` uses its own streams, so the output does not depend
    on ``threads``.
    """
    check_seed(seed)
    T = _horizon(sol, T)
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    maj = _majorant(table, sol)
    explicit = None
    resolved = None
    if isinstance(tau0, np.ndarray) or isinstance(tau0, (list, tuple)):
        explicit = np.asarray(tau0, np.int64)
        if explicit.shape != (n,):
            raise ValueError("explicit tau0 array must have length n")
        if np.any(explicit < 0) or np.any(explicit >= table.n_statuses):
            raise ValueError("tau0 entries must be statuses")
    else:
        resolved = resolve_tau0(table.schema, tau0)
    n_blocks = -(-n // block)

    def run(b):
        lo, hi = b * block, min(n, (b + 1) * block)
        if explicit is not None:
            tau0s = explicit[lo:hi]
        elif isinstance(resolved, tuple):
            keys, probs = resolved
            u = stream(seed, b, INITIAL).random(hi - lo)
            idx = np.minimum(np.searchsorted(np.cumsum(probs), u, side="right"), len(keys) - 1)
            tau0s = keys[idx]
        else:
            tau0s = np.full(hi - lo, resolved, np.int64)
        return _simulate_block(table, sol, maj, tau0s, T, stream(seed, b, SINGLE), engine)

    out = []
    for paths in _pmap(run, range(n_blocks), threads):
        out.extend(paths)
    return out
