"""Aggregate approximation built from independent limit paths.

Each initial molecule of a tracked species gets its own limit path. A path in
status ``tau`` contributes ``1 / alpha(sigma(tau))`` to species
``sigma(tau)``, where ``alpha(S)`` counts the statuses of ``S``; a path in
DELTA contributes nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fluid import FluidSolution
from .network import DELTA, ReactionNetwork, StatusSchema
from .singlemol import LimitRateTable, simulate_y_batch

__all__ = [
    "AggregateEnsemble",
    "check_subconservative",
    "build_aggregate",
    "aggregate_trajectory",
    "tracked_mass",
]


def _exact(p):
    if isinstance(p, (int, Fraction)):
        return Fraction(p)
    return None


def check_subconservative(net: ReactionNetwork, schema: StatusSchema) -> list[tuple[int, int]]:
    """Pairs ``(reaction, status)`` where tracked mass is not carried over.

    For every reaction ``y -> y'`` and every status ``tau'`` the identity
    ``sum_tau y_sigma(tau) p(tau, tau') == y'_sigma(tau')`` must hold. Rational
    probabilities are compared exactly, floats within 1e-9.
    """
    bad = []
    for r, rxn in enumerate(net.reactions):
        for b in range(schema.n_statuses):
            target = rxn.product[schema.sigma[b]]
            terms = [
                (rxn.reactant[schema.sigma[a]], p)
                for (rr, a, bb), p in schema.probs.items()
                if rr == r and bb == b
            ]
            if all(_exact(p) is not None for _, p in terms):
                ok = sum((c * Fraction(p) for c, p in terms), Fraction(0)) == target
            else:
                ok = abs(sum(c * float(p) for c, p in terms) - target) <= 1e-9
            if not ok:
                bad.append((r, b))
    return bad


@dataclass(frozen=True, eq=False)
class AggregateEnsemble:
    """Independent limit paths together with their weights.

    ``counts0[tau]`` is the number of paths started in status ``tau``.
    """

    counts0: np.ndarray
    alpha: np.ndarray
    sigma: tuple
    paths: list
    volume: float
    horizon: float
    tracked_species: tuple

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def build_aggregate(
    table: LimitRateTable,
    sol: FluidSolution,
    z_star,
    V,
    T=None,
    seed=0,
    *,
    threads=1,
    initial=None,
    engine="auto",
) -> AggregateEnsemble:
    """Start ``floor(V z*_S)`` paths for every tracked species ``S``.

    All paths of species ``S`` start in one designated status: ``initial[S]``
    if given (species index or name to status index or name), else the
    schema's initial status for ``S``.
    """
    aug = table.aug
    net, schema = aug.base, aug.schema
    problems = check_subconservative(net, schema)
    if problems:
        desc = ", ".join(f"{net.reactions[r].label or r}/{schema.statuses[b]}" for r, b in problems)
        raise ValueError(f"network is not sub-conservative: {desc}")
    z_star = np.asarray(z_star, dtype=float)
    if z_star.shape != (net.dim,) or np.any(z_star < 0):
        raise ValueError(f"z* must be a non-negative vector of length {net.dim}")
    if not float(V) > 0:
        raise ValueError("V must be positive")
    T = sol.T if T is None else float(T)
    starts = {}
    for s in schema.tracked_species():
        starts[s] = schema.initial_status(s)
    for k, v in (initial or {}).items():
        s = net.species_index(k) if isinstance(k, str) else int(k)
        tau = schema.status_index(v) if isinstance(v, str) else int(v)
        if tau == DELTA or schema.sigma[tau] != s:
            raise ValueError(f"status {v!r} does not belong to species {k!r}")
        starts[s] = tau
    counts0 = np.zeros(schema.n_statuses, np.int64)
    for s, tau in starts.items():
        counts0[tau] += int(np.floor(float(V) * z_star[s] + 1e-9))
    tau0s = np.repeat(np.arange(schema.n_statuses), counts0)
    if tau0s.size:
        paths = simulate_y_batch(table, sol, tau0s, tau0s.size, seed, T=T, threads=threads, engine=engine)
    else:
        paths = []
    return AggregateEnsemble(
        counts0,
        schema.alpha(net.dim),
        schema.sigma,
        paths,
        float(V),
        T,
        tuple(schema.tracked_species()),
    )


def _status_matrix(ens: AggregateEnsemble, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > ens.horizon):
        raise ValueError(f"grid must lie in [0, {ens.horizon}]")
    out = np.empty((ens.n_paths, grid.size), np.int64)
    for i, p in enumerate(ens.paths):
        out[i] = p.state_at(grid)
    return out


def aggregate_trajectory(ens: AggregateEnsemble, grid) -> np.ndarray:
    """``X~(t) / V`` on ``grid``; one column per tracked species."""
    grid = np.asarray(grid, dtype=float)
    d = len(ens.alpha)
    weights = np.zeros(len(ens.sigma) + 1)
    for tau, s in enumerate(ens.sigma):
        weights[tau] = 1.0 / ens.alpha[s]
    full = np.zeros((grid.size, d))
    if ens.n_paths:
        st = _status_matrix(ens, grid)
        species = np.array(list(ens.sigma) + [0], np.int64)[st]
        w = weights[st]
        for s in range(d):
            full[:, s] = np.sum(np.where(species == s, w, 0.0), axis=0)
    return full[:, list(ens.tracked_species)] / ens.volume


def tracked_mass(ens: AggregateEnsemble, grid) -> np.ndarray:
    """``sum_S alpha(S) X~_S(t)`` on ``grid``: the number of live paths."""
    grid = np.asarray(grid, dtype=float)
    if not ens.n_paths:
        return np.zeros(grid.size)
    st = _status_matrix(ens, grid)
    return np.sum(st != DELTA, axis=0).astype(float)
