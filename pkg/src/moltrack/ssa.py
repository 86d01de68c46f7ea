"""Exact simulation of the species chain and the coupled tracking chain.

Gillespie's direct method uses two uniforms per event from the ``EVENTS``
stream. When a molecule is tracked and the firing reaction consumes its
species, one more uniform is drawn from the separate ``TRACKING`` stream to
decide whether the tracked molecule took part and where it went. The event
stream is therefore the same with or without tracking.

Mass-action networks run in a numba kernel. Networks with custom kinetics run
through :func:`_gillespie_python`, which consumes randomness in exactly the
same order and doubles as a reference implementation.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .network import (
    DELTA,
    AugmentedNetwork,
    ReactionNetwork,
    stochastic_intensity,
    theta,
)
from .rng import EVENTS, INITIAL, TRACKING, check_seed, stream

__all__ = [
    "SimulationError",
    "StateSpaceError",
    "JumpPath",
    "TrackedPath",
    "TransientDistribution",
    "simulate_ssa",
    "simulate_tracked",
    "ssa_batch",
    "tracked_batch",
    "exact_transient",
    "default_x0",
    "resolve_tau0",
]

DEFAULT_STATE_CAP = 200_000


class SimulationError(RuntimeError):
    pass


class StateSpaceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Right-continuous piecewise-constant path.

    ``initial_state`` is an integer vector for species paths and an integer
    status for status paths. ``post_states[k]`` is the state right after
    ``jump_times[k]``.
    """

    initial_state: np.ndarray | int
    jump_times: np.ndarray
    post_states: np.ndarray
    horizon: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t):
        """State at time(s) ``t``; jumps at exactly ``t`` are included."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise ValueError(f"t outside [0, {self.horizon}]")
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        init = np.asarray(self.initial_state)
        if self.n_jumps == 0:
            return np.broadcast_to(init, idx.shape + init.shape).copy()
        out = self.post_states[np.maximum(idx, 0)]
        before = idx < 0
        if np.any(before):
            out = np.array(out, copy=True)
            out[before] = init
        return out

    def pre_states(self) -> np.ndarray:
        """State right before each jump."""
        init = np.asarray(self.initial_state)[None, ...]
        return np.concatenate([init, self.post_states[:-1]], axis=0) if self.n_jumps else self.post_states[:0]

    def to_csv(self, path, names=("state",)) -> Path:
        path = Path(path)
        times = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        init = np.atleast_1d(np.asarray(self.initial_state))
        rows = [init, *np.atleast_2d(self.post_states.reshape(self.n_jumps, -1)), self.state_at(self.horizon)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for t, row in zip(times, rows):
                w.writerow([repr(float(t)), *np.atleast_1d(row).tolist()])
        return path


@dataclass(frozen=True, eq=False)
class TrackedPath:
    """One run of the coupled chain.

    ``species_path`` is ``None`` when a batch was asked not to keep it. With a
    sampling grid, ``grid_states`` and ``grid_status`` hold the species counts
    and the status at each grid time.
    """

    species_path: JumpPath | None
    status_path: JumpPath
    grid: np.ndarray | None = None
    grid_states: np.ndarray | None = None
    grid_status: np.ndarray | None = None

    def to_csv(self, path, species=None, status_names=None) -> Path:
        if self.species_path is None:
            raise ValueError("species path was not kept")
        path = Path(path)
        sp_path = self.species_path
        d = len(np.atleast_1d(sp_path.initial_state))
        species = species or [f"x{i}" for i in range(d)]
        times = np.concatenate([[0.0], sp_path.jump_times, [sp_path.horizon]])
        states = sp_path.state_at(times)
        status = self.status_path.state_at(times)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *species, "status"])
            for t, row, st in zip(times, states, status):
                name = status_names(int(st)) if status_names else int(st)
                w.writerow([repr(float(t)), *row.tolist(), name])
        return path


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _grow1(a, n):
    out = np.empty(max(2 * a.shape[0], n), a.dtype)
    out[: a.shape[0]] = a
    return out


@numba.njit(cache=True)
def _grow2(a, n):
    out = np.empty((max(2 * a.shape[0], n), a.shape[1]), a.dtype)
    out[: a.shape[0]] = a
    return out


@numba.njit(cache=True, nogil=True)
def _gillespie(
    x0, T, reactant, change, kvol, gen,
    track, tau0, sigma, tr_start, tr_end, tr_dest, tr_cum, tgen,
    grid, keep_path,
):
    n, d = reactant.shape
    G = grid.shape[0]
    times = np.empty(64 if keep_path else 0)
    states = np.empty((64 if keep_path else 0, d), np.int64)
    njump = 0
    st_times = np.empty(16)
    st_vals = np.empty(16, np.int64)
    nst = 0
    g_states = np.empty((G, d), np.int64)
    g_status = np.empty(G, np.int64)
    gi = 0
    x = x0.copy()
    status = tau0
    t = 0.0
    a = np.empty(n)
    code = 0
    while True:
        a0 = 0.0
        for r in range(n):
            v = kvol[r]
            for s in range(d):
                c = reactant[r, s]
                if c == 0:
                    continue
                if x[s] < c:
                    v = 0.0
                    break
                ff = 1
                for j in range(c):
                    ff *= x[s] - j
                v *= ff
            a[r] = v
            a0 += a[r]
        if not math.isfinite(a0):
            code = 1
            break
        if a0 <= 0.0:
            break
        t_new = t - math.log1p(-gen.random()) / a0
        if t_new > T:
            break
        while gi < G and grid[gi] < t_new:
            g_states[gi] = x
            g_status[gi] = status
            gi += 1
        target = gen.random() * a0
        cum = 0.0
        chosen = -1
        for r in range(n):
            if a[r] > 0.0:
                cum += a[r]
                chosen = r
                if target < cum:
                    break
        r = chosen
        if track and status >= 0:
            s = sigma[status]
            ys = reactant[r, s]
            if ys > 0:
                th = ys / x[s]
                u = tgen.random()
                if u < th:
                    v = u / th
                    k0 = tr_start[r, status]
                    k1 = tr_end[r, status]
                    new = tr_dest[k1 - 1]
                    for k in range(k0, k1):
                        if v < tr_cum[k]:
                            new = tr_dest[k]
                            break
                    if new != status:
                        if nst == st_times.shape[0]:
                            st_times = _grow1(st_times, nst + 1)
                            st_vals = _grow1(st_vals, nst + 1)
                        st_times[nst] = t_new
                        st_vals[nst] = new
                        nst += 1
                        status = new
        for s in range(d):
            x[s] += change[r, s]
        t = t_new
        if keep_path:
            if njump == times.shape[0]:
                times = _grow1(times, njump + 1)
                states = _grow2(states, njump + 1)
            times[njump] = t
            states[njump] = x
            njump += 1
    while gi < G:
        g_states[gi] = x
        g_status[gi] = status
        gi += 1
    return (
        times[:njump].copy(), states[:njump].copy(),
        st_times[:nst].copy(), st_vals[:nst].copy(),
        g_states, g_status, code,
    )


def _gillespie_python(net, V, x0, T, gen, aug, tau0, tgen, grid, keep_path):
    """Reference loop; any kinetics. Consumes randomness like the kernel."""
    n, d = len(net.reactions), net.dim
    change = net.change_matrix
    times, states, st_times, st_vals = [], [], [], []
    G = len(grid)
    g_states = np.empty((G, d), np.int64)
    g_status = np.empty(G, np.int64)
    gi = 0
    x = np.array(x0, dtype=np.int64)
    status = tau0
    t = 0.0
    dest = {}
    if aug is not None:
        for r in range(n):
            for tau in range(aug.schema.n_statuses):
                rows = aug.destinations(r, tau)
                if rows:
                    dest[r, tau] = (np.cumsum([float(p) for _, p in rows]), [b for b, _ in rows])
    while True:
        a = np.array([stochastic_intensity(net, r, x, V) for r in range(n)])
        if np.any(a < 0):
            raise SimulationError("negative intensity from custom kinetics")
        a0 = 0.0
        for v in a:
            a0 += v
        if not math.isfinite(a0):
            raise SimulationError("rate overflow: non-finite total intensity")
        if a0 <= 0.0:
            break
        t_new = t - math.log1p(-gen.random()) / a0
        if t_new > T:
            break
        while gi < G and grid[gi] < t_new:
            g_states[gi] = x
            g_status[gi] = status
            gi += 1
        target = gen.random() * a0
        cum = 0.0
        r = -1
        for j in range(n):
            if a[j] > 0.0:
                cum += a[j]
                r = j
                if target < cum:
                    break
        if aug is not None and status != DELTA:
            th = theta(aug.schema, net.reactions[r].reactant, status, x)
            if th > 0:
                u = tgen.random()
                if u < th:
                    v = u / th
                    cum_p, targets = dest[r, status]
                    new = targets[-1]
                    for cp, b in zip(cum_p, targets):
                        if v < cp:
                            new = b
                            break
                    if new != status:
                        st_times.append(t_new)
                        st_vals.append(new)
                        status = new
        x = x + change[r]
        t = t_new
        if keep_path:
            times.append(t)
            states.append(x.copy())
    while gi < G:
        g_states[gi] = x
        g_status[gi] = status
        gi += 1
    return (
        np.array(times, dtype=float),
        np.array(states, dtype=np.int64).reshape(len(states), d),
        np.array(st_times, dtype=float),
        np.array(st_vals, dtype=np.int64),
        g_states,
        g_status,
        0,
    )


# ---------------------------------------------------------------- helpers


def default_x0(net: ReactionNetwork, V: float, z0) -> np.ndarray:
    """``floor(V z0)``."""
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (net.dim,) or np.any(z0 < 0):
        raise ValueError(f"z0 must be a non-negative vector of length {net.dim}")
    return np.floor(float(V) * z0 + 1e-9).astype(np.int64)


def _check_common(net, V, x0, z0, T):
    if not float(V) > 0:
        raise ValueError("V must be positive")
    if not float(T) > 0:
        raise ValueError("T must be positive")
    if x0 is None:
        if z0 is None:
            raise ValueError("give x0 or z0")
        x0 = default_x0(net, V, z0)
    x0 = np.array(x0, dtype=np.int64)
    if x0.shape != (net.dim,):
        raise ValueError(f"x0 must have length {net.dim}")
    if np.any(x0 < 0):
        raise ValueError("x0 must be non-negative")
    return x0, float(T)


def _grid(grid, T):
    if grid is None:
        return np.zeros(0)
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or np.any(np.diff(g) < 0) or (g.size and (g[0] < 0 or g[-1] > T)):
        raise ValueError("grid must be sorted and inside [0, T]")
    return np.ascontiguousarray(g)


def _tracking_tables(aug: AugmentedNetwork):
    n, m = len(aug.base.reactions), aug.schema.n_statuses
    start = np.zeros((n, m), np.int64)
    end = np.zeros((n, m), np.int64)
    dest, cum = [], []
    for r in range(n):
        for tau in range(m):
            rows = aug.destinations(r, tau)
            start[r, tau] = len(dest)
            c = 0.0
            for b, p in rows:
                c += float(p)
                dest.append(b)
                cum.append(c)
            end[r, tau] = len(dest)
    if not dest:
        dest, cum = [DELTA], [1.0]
    return start, end, np.array(dest, np.int64), np.array(cum, float)


def resolve_tau0(schema, tau0):
    """Normalise ``tau0`` to a status index or a ``(statuses, probs)`` pair.

    Accepts an index, a status name, or a mapping from either to probability.
    """
    if isinstance(tau0, dict):
        keys = [schema.status_index(k) if isinstance(k, str) else int(k) for k in tau0]
        probs = np.array([float(v) for v in tau0.values()])
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
            raise ValueError("tau0 distribution must be non-negative and sum to 1")
        for k in keys:
            if not 0 <= k < schema.n_statuses:
                raise ValueError("tau0 must be a status, not DELTA")
        return np.array(keys, np.int64), probs / probs.sum()
    tau = schema.status_index(tau0) if isinstance(tau0, str) else int(tau0)
    if not 0 <= tau < schema.n_statuses:
        raise ValueError("tau0 must be a status, not DELTA")
    return tau


def _draw_tau0(resolved, seed, rep):
    if isinstance(resolved, tuple):
        keys, probs = resolved
        u = stream(seed, rep, INITIAL).random()
        k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        return int(keys[min(k, len(keys) - 1)])
    return resolved


@dataclass(frozen=True, eq=False)
class _Plan:
    """Everything a replication needs that does not depend on the replication."""

    net: ReactionNetwork
    V: float
    T: float
    aug: AugmentedNetwork | None
    grid: np.ndarray
    use_python: bool
    kernel_args: tuple


def _plan(net, V, T, aug=None, grid=None, engine="auto") -> _Plan:
    if engine not in ("auto", "numba", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    g = _grid(grid, T)
    use_python = engine == "python" or not net.is_mass_action
    args = ()
    if not use_python:
        if aug is not None:
            start, end, dest, cum = _tracking_tables(aug)
            sigma = np.array(aug.schema.sigma, np.int64)
        else:
            start = end = np.zeros((1, 1), np.int64)
            dest, cum, sigma = np.zeros(1, np.int64), np.zeros(1), np.zeros(1, np.int64)
        args = (
            np.ascontiguousarray(net.reactant_matrix),
            np.ascontiguousarray(net.change_matrix),
            np.ascontiguousarray(net.volume_rate_constants(V)),
            sigma, start, end, dest, cum,
        )
    return _Plan(net, float(V), float(T), aug, g, use_python, args)


def _run(plan: _Plan, x0, seed, rep, tau0=DELTA, keep_path=True):
    gen = stream(seed, rep, EVENTS)
    tgen = stream(seed, rep, TRACKING) if plan.aug is not None else gen
    if plan.use_python:
        out = _gillespie_python(
            plan.net, plan.V, x0, plan.T, gen, plan.aug, tau0, tgen, plan.grid, keep_path
        )
    else:
        reactant, change, kvol, sigma, start, end, dest, cum = plan.kernel_args
        out = _gillespie(
            x0, plan.T, reactant, change, kvol, gen,
            plan.aug is not None, int(tau0), sigma, start, end, dest, cum, tgen,
            plan.grid, keep_path,
        )
    if out[6] == 1:
        raise SimulationError("rate overflow: non-finite total intensity")
    return out


# ---------------------------------------------------------------- public API


def simulate_ssa(net: ReactionNetwork, V, x0=None, T=1.0, seed=0, *, z0=None, traj_id=0, engine="auto") -> JumpPath:
    """One exact path of the species chain at volume ``V``."""
    check_seed(seed)
    x0, T = _check_common(net, V, x0, z0, T)
    times, states, *_ = _run(_plan(net, V, T, engine=engine), x0, seed, traj_id)
    return JumpPath(x0, times, states, T)


def _tracked_path(out, x0, tau0, T, grid, keep_species):
    times, states, st_t, st_v, g_states, g_status, _ = out
    species = JumpPath(x0, times, states, T) if keep_species else None
    status = JumpPath(int(tau0), st_t, st_v, T)
    if grid is None:
        return TrackedPath(species, status)
    return TrackedPath(species, status, np.asarray(grid, float), g_states, g_status)


def _check_tracked(aug, x0, tau0):
    s = aug.schema.sigma[tau0]
    if x0[s] <= 0:
        raise ValueError(
            f"x0 has no molecule of {aug.base.species[s]!r} for the tracked status "
            f"{aug.schema.statuses[tau0]!r}"
        )


def simulate_tracked(
    aug: AugmentedNetwork, V, x0=None, tau0=0, T=1.0, seed=0, *, z0=None, traj_id=0, grid=None, engine="auto"
) -> TrackedPath:
    """One exact path of the coupled chain ``(Y^V, X^V)``."""
    check_seed(seed)
    net = aug.base
    x0, T = _check_common(net, V, x0, z0, T)
    tau = resolve_tau0(aug.schema, tau0)
    tau = _draw_tau0(tau, seed, traj_id)
    _check_tracked(aug, x0, tau)
    out = _run(_plan(net, V, T, aug, grid, engine), x0, seed, traj_id, tau)
    return _tracked_path(out, x0, tau, T, grid, True)


def _pmap(fn, items, threads):
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def ssa_batch(net, V, x0=None, T=1.0, reps=1, seed=0, *, z0=None, threads=1, grid=None, engine="auto"):
    """``reps`` independent species paths.

    Without ``grid`` a list of :class:`JumpPath` is returned. With ``grid`` an
    integer array of shape ``(reps, len(grid), d)`` holding the states at the
    grid times is returned and full paths are not stored.
    """
    check_seed(seed)
    x0, T = _check_common(net, V, x0, z0, T)
    keep = grid is None
    plan = _plan(net, V, T, grid=grid, engine=engine)

    def one(rep):
        out = _run(plan, x0, seed, rep, keep_path=keep)
        return JumpPath(x0, out[0], out[1], T) if keep else out[4]

    res = _pmap(one, range(int(reps)), threads)
    if keep:
        return res
    return np.stack(res) if res else np.zeros((0, len(grid), net.dim), np.int64)


def tracked_batch(
    aug, V, x0=None, tau0=0, T=1.0, reps=1, seed=0, *, z0=None, threads=1, grid=None, keep_species=True, engine="auto"
) -> list[TrackedPath]:
    """``reps`` independent runs of the coupled chain.

    ``tau0`` may be a status or a distribution over statuses; each replication
    draws its own initial status from a dedicated stream.
    """
    check_seed(seed)
    net = aug.base
    x0, T = _check_common(net, V, x0, z0, T)
    resolved = resolve_tau0(aug.schema, tau0)
    cand = resolved[0] if isinstance(resolved, tuple) else [resolved]
    for tau in cand:
        _check_tracked(aug, x0, int(tau))

    plan = _plan(net, V, T, aug, grid, engine)

    def one(rep):
        tau = _draw_tau0(resolved, seed, rep)
        out = _run(plan, x0, seed, rep, tau, keep_path=keep_species)
        return _tracked_path(out, x0, tau, T, grid, keep_species)

    return _pmap(one, range(int(reps)), threads)


# ---------------------------------------------------------------- uniformization


@dataclass(frozen=True, eq=False)
class TransientDistribution:
    """Law at a fixed time over an enumerated state space.

    ``states`` has one row per state; ``statuses`` is set for tracked chains.
    ``lost_mass`` is the probability of having left the truncation box.
    """

    states: np.ndarray
    probs: np.ndarray
    statuses: np.ndarray | None = None
    lost_mass: float = 0.0

    def as_dict(self) -> dict:
        if self.statuses is None:
            return {tuple(int(v) for v in s): float(p) for s, p in zip(self.states, self.probs)}
        return {
            (int(a), tuple(int(v) for v in s)): float(p)
            for a, s, p in zip(self.statuses, self.states, self.probs)
        }

    def marginal_species(self) -> "TransientDistribution":
        if self.statuses is None:
            return self
        keys, inv = np.unique(self.states, axis=0, return_inverse=True)
        probs = np.zeros(len(keys))
        np.add.at(probs, inv.ravel(), self.probs)
        return TransientDistribution(keys, probs, None, self.lost_mass)

    def prob_of(self, x) -> float:
        x = np.asarray(x)
        hit = np.all(self.states == x[None, :], axis=1)
        return float(self.probs[hit].sum())


def _transitions(net, V, key, aug):
    """Outgoing ``(rate, next_key)`` pairs of a state key."""
    if aug is None:
        x = np.array(key, np.int64)
        tau = None
    else:
        tau, x = key[0], np.array(key[1:], np.int64)
    out = {}
    for r in range(len(net.reactions)):
        lam = stochastic_intensity(net, r, x, V)
        if lam <= 0:
            continue
        nx = tuple(int(v) for v in x + net.change_matrix[r])
        if aug is None:
            out[nx] = out.get(nx, 0.0) + lam
            continue
        th = theta(aug.schema, net.reactions[r].reactant, tau, x)
        if th < 1:
            k = (tau, *nx)
            out[k] = out.get(k, 0.0) + (1.0 - th) * lam
        if th > 0:
            for b, p in aug.destinations(r, tau):
                k = (b, *nx)
                out[k] = out.get(k, 0.0) + th * float(p) * lam
    return out


def exact_transient(
    model,
    V,
    x0,
    t: float,
    tau0=None,
    truncation=None,
    *,
    cap: int = DEFAULT_STATE_CAP,
    tol: float = 1e-10,
) -> TransientDistribution:
    """Transient law at time ``t`` by uniformization.

    ``model`` is a :class:`ReactionNetwork` or, with ``tau0``, an
    :class:`AugmentedNetwork`. ``truncation`` optionally caps each species
    count; jumps that leave the box go to an absorbing sink whose mass is
    reported as ``lost_mass``. Poisson weights are summed until the remaining
    tail is below ``tol``.
    """
    aug = model if isinstance(model, AugmentedNetwork) else None
    net = aug.base if aug is not None else model
    x0 = np.array(x0, np.int64)
    if x0.shape != (net.dim,) or np.any(x0 < 0):
        raise ValueError("x0 must be a non-negative vector of the right length")
    if t < 0:
        raise ValueError("t must be non-negative")
    if aug is not None:
        if tau0 is None:
            raise ValueError("tau0 is required for a tracked transient")
        tau0 = resolve_tau0(aug.schema, tau0)
        if isinstance(tau0, tuple):
            raise ValueError("exact_transient needs a single initial status")
        start = (tau0, *x0.tolist())
    else:
        start = tuple(x0.tolist())
    box = None if truncation is None else np.asarray(truncation, np.int64)

    index = {start: 0}
    keys = [start]
    rows, cols, vals = [], [], []
    sink_rates = []
    i = 0
    while i < len(keys):
        key = keys[i]
        sink = 0.0
        for nk, rate in _transitions(net, V, key, aug).items():
            xs = np.array(nk if aug is None else nk[1:])
            if box is not None and np.any(xs > box):
                sink += rate
                continue
            j = index.get(nk)
            if j is None:
                if len(keys) >= cap:
                    raise StateSpaceError(f"reachable state space exceeds the cap of {cap} states")
                j = len(keys)
                index[nk] = j
                keys.append(nk)
            rows.append(i)
            cols.append(j)
            vals.append(rate)
        sink_rates.append(sink)
        i += 1
    n = len(keys)
    # the sink is state n
    rows += list(range(n))
    cols += [n] * n
    vals += sink_rates
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    exit_rate = np.asarray(Q.sum(axis=1)).ravel() - Q.diagonal()
    Q = Q - sp.diags(exit_rate)
    QT = Q.T.tocsr()
    p = np.zeros(n + 1)
    p[0] = 1.0
    lam = float(exit_rate.max())
    if t > 0 and lam > 0:
        mu = lam * t
        K = int(poisson.isf(tol, mu)) + 1
        weights = poisson.pmf(np.arange(K + 1), mu)
        v = p
        acc = weights[0] * v
        for k in range(1, K + 1):
            v = v + (QT @ v) / lam
            acc = acc + weights[k] * v
        p = acc
    arr = np.array(keys, np.int64)
    if aug is None:
        return TransientDistribution(arr, p[:n], None, float(p[n]))
    return TransientDistribution(arr[:, 1:], p[:n], arr[:, 0], float(p[n]))
