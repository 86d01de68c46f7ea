"""Explicit error bounds for the fluid, single-molecule and aggregate limits.

All suprema over the tube ``{Z(u) + h : u <= t, |h|_inf <= eps}`` are taken
at the upper corner ``max Z + eps`` of each fluid grid cell. Mass-action rates,
their partial derivatives and the lattice discrepancies used below are all
non-decreasing in every coordinate, so the corner value bounds the supremum
over the cell's box. Time integrals are upper Riemann sums of the
non-decreasing running suprema, hence also upper bounds.

The lattice discrepancy ``|lambda^V(x)/V - lambda(x/V)|`` is evaluated at
``z = x/V`` through the real extension of the falling factorial, so networks
whose stochastic and deterministic rates agree on the lattice (SIS, for
instance) get exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numba
import numpy as np

from .fluid import FluidSolution
from .network import DELTA, AugmentedNetwork, ReactionNetwork
from .rng import POISSON, check_seed, stream
from .ssa import _pmap
from .singlemol import build_limit_rates

__all__ = [
    "BoundError",
    "TubeSpec",
    "BoundQuantities",
    "BoundValue",
    "BoundReport",
    "centered_poisson_bound",
    "centered_poisson_frequency",
    "tube_quantities",
    "p_bound",
    "single_molecule_bound",
    "aggregate_bound",
    "evaluate_bounds",
    "sis_rough_p_bound",
    "sis_aggregate_walkthrough",
    "grid_search",
]

E = math.e


class BoundError(ValueError):
    """The bound's hypotheses fail for these inputs."""


@dataclass(frozen=True, eq=False)
class TubeSpec:
    sol: FluidSolution
    epsilon: float
    t: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.t <= self.sol.T:
            raise ValueError(f"t must lie in [0, {self.sol.T}]")


@dataclass(frozen=True)
class BoundValue:
    raw: float
    clamped: float
    vacuous: bool

    @classmethod
    def of(cls, raw: float) -> "BoundValue":
        raw = float(raw)
        return cls(raw, min(max(raw, 0.0), 1.0), raw >= 1.0)


# ---------------------------------------------------------------- Poisson lemma


def centered_poisson_bound(T: float, epsilon: float, n: int) -> float:
    """``6 exp(e T / 2 - eps sqrt(n) / 3)``, unclamped."""
    if not T > 0 or not epsilon > 0:
        raise ValueError("T and epsilon must be positive")
    if int(n) < 1:
        raise ValueError("n must be a positive integer")
    return 6.0 * math.exp(E * T / 2.0 - epsilon * math.sqrt(n) / 3.0)


@numba.njit(cache=True, nogil=True)
def _poisson_sup_block(length, n_paths, gen):
    out = np.empty(n_paths)
    for p in range(n_paths):
        t = 0.0
        k = 0
        hi = 0.0
        lo = 0.0
        while True:
            t -= math.log1p(-gen.random())
            if t > length:
                break
            # N(t) - t just before and at the k-th jump
            if k - t < lo:
                lo = k - t
            k += 1
            if k - t > hi:
                hi = k - t
        if k - length < lo:
            lo = k - length
        out[p] = max(hi, -lo)
    return out


def centered_poisson_frequency(T, epsilon, n, paths, seed=0, *, threads=1, block=1000):
    """Monte Carlo estimate of ``P(sup_{t <= nT} |N(t) - t| / n > eps)``.

    ``epsilon`` may be an array; the same paths serve every entry.
    """
    check_seed(seed)
    length = float(n) * float(T)
    n_blocks = -(-int(paths) // block)

    def run(b):
        m = min(block, int(paths) - b * block)
        return _poisson_sup_block(length, m, stream(seed, b, POISSON))

    sups = np.concatenate(_pmap(run, range(n_blocks), threads)) if n_blocks else np.zeros(0)
    eps = np.asarray(epsilon, dtype=float)
    freq = np.mean(sups[:, None] / n > eps.ravel()[None, :], axis=0) if sups.size else np.zeros(eps.size)
    return float(freq[0]) if eps.ndim == 0 else freq.reshape(eps.shape)


# ---------------------------------------------------------------- tube helpers


def _require_mass_action(net: ReactionNetwork):
    if not net.is_mass_action:
        raise BoundError("bounds are available for mass-action kinetics only")


def _cells(sol: FluidSolution, t: float):
    """Cells meeting ``[0, t]``, their clipped widths and Z envelopes."""
    if sol.n_cells == 0 or t <= 0:
        d = sol.values.shape[1]
        return np.zeros(0), np.zeros((0, d)), np.zeros((0, d))
    lo, hi = sol.cell_envelope()
    n = int(np.searchsorted(sol.grid, t, side="left"))
    n = max(1, min(n, sol.n_cells))
    widths = np.minimum(sol.grid[1 : n + 1], t) - sol.grid[:n]
    return widths, lo[:n], hi[:n]


def _monomials(U, expo):
    """``U**expo`` for every cell (rows of U) and every exponent row."""
    out = np.ones((U.shape[0], expo.shape[0]))
    for k, e in enumerate(expo):
        for s, c in enumerate(e):
            if c:
                out[:, k] *= U[:, s] ** int(c)
    return out


def _grad_sums(U, expo):
    """``sum_i d/dz_i z**expo`` at U; every term is non-negative."""
    out = np.zeros((U.shape[0], expo.shape[0]))
    for k, e in enumerate(expo):
        for i, ci in enumerate(e):
            if ci == 0:
                continue
            term = np.full(U.shape[0], float(ci))
            for s, c in enumerate(e):
                p = int(c) - (1 if s == i else 0)
                if p:
                    term *= U[:, s] ** p
            out[:, k] += term
    return out


def _lattice_products(U, expo, offsets, V):
    """``prod_s prod_{j<expo_s} (U_s - (j + offset_s)/V)_+`` per cell and row."""
    out = np.ones((U.shape[0], expo.shape[0]))
    for k, e in enumerate(expo):
        for s, c in enumerate(e):
            for j in range(int(c)):
                out[:, k] *= np.maximum(U[:, s] - (j + offsets[k, s]) / V, 0.0)
    return out


def _floor_products(U, expo, V):
    """``prod_s ff(floor(V U_s), expo_s) / V**|expo|`` per cell and row."""
    X = np.floor(V * U)
    out = np.ones((U.shape[0], expo.shape[0]))
    for k, e in enumerate(expo):
        for s, c in enumerate(e):
            for j in range(int(c)):
                out[:, k] *= np.maximum(X[:, s] - j, 0.0) / V
    return out


def _integrate(widths, values):
    return float(np.sum(widths * values))


def _running(values):
    return np.maximum.accumulate(values) if values.size else values


@dataclass(frozen=True)
class _Tube:
    Lambda0: np.ndarray
    L0: np.ndarray
    delta0: np.ndarray
    Lambda3: np.ndarray
    widths: np.ndarray

    def sup(self, name):
        a = getattr(self, name)
        return float(a[-1]) if a.size else 0.0

    def integral(self, name):
        return _integrate(self.widths, getattr(self, name))


def _tube(net: ReactionNetwork, sol, eps, t, V) -> _Tube:
    widths, _, hi = _cells(sol, t)
    U = hi + eps
    Y = net.reactant_matrix
    kappa = net.rate_constants
    mono = _monomials(U, Y)
    lam = mono @ kappa
    lip = _grad_sums(U, Y) @ kappa
    zero = np.zeros_like(Y)
    delta = (mono - _lattice_products(U, Y, zero, V)) @ kappa
    lam_v = _floor_products(U, Y, V) @ kappa
    return _Tube(_running(lam), _running(lip), _running(np.maximum(delta, 0.0)), _running(lam_v), widths)


# ---------------------------------------------------------------- quantities


@dataclass(frozen=True)
class BoundQuantities:
    """Tube quantities at horizon ``t``.

    Names ending in ``_2eps`` are taken over the tube of radius ``2 eps``.
    ``*_of_t`` arrays give the running suprema at the right end of each grid
    cell in ``[0, t]`` (times in ``times``). Tracked and hat quantities are
    ``None`` when no tracking schema was supplied.
    """

    V: float
    epsilon: float
    t: float
    min_component: float
    R: float
    Lambda0: float
    Lambda1: float
    L0: float
    L1: float
    delta0: float
    delta1: float
    Lambda0_2eps: float
    Lambda1_2eps: float
    L0_2eps: float
    L1_2eps: float
    delta0_2eps: float
    delta1_2eps: float
    times: np.ndarray = field(repr=False)
    Lambda0_of_t: np.ndarray = field(repr=False)
    L0_of_t: np.ndarray = field(repr=False)
    delta0_of_t: np.ndarray = field(repr=False)
    Lambda_tilde0: float | None = None
    Lambda_tilde1: float | None = None
    L_tilde0: float | None = None
    L_tilde1: float | None = None
    delta_tilde0: float | None = None
    delta_tilde1: float | None = None
    R_hat: float | None = None
    r_hat: float | None = None
    Lambda_hat0: float | None = None
    Lambda_hat1: float | None = None
    Lambda_hat2: float | None = None
    Lambda_hat3: float | None = None
    omega: float | None = None
    zeta: float | None = None
    c: float | None = None
    tracked_error: str | None = None

    def eta(self, gamma: float = 1.0) -> float:
        """``exp(-L1^{2eps}) gamma eps - delta1^{V,2eps}``."""
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        return math.exp(-self.L1_2eps) * gamma * self.epsilon - self.delta1_2eps

    def as_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def _tracked(aug: AugmentedNetwork, sol, eps, t, V):
    net, schema = aug.base, aug.schema
    table = build_limit_rates(aug)
    entries = table.entries
    if not entries:
        raise BoundError("no tracked reactions")
    widths, lo, hi = _cells(sol, t)
    for e in entries:
        s = schema.sigma[e.source]
        if lo.size and float(lo[:, s].min()) - eps <= 0:
            raise BoundError(
                f"tube of radius {eps:g} touches zero for {net.species[s]!r}; tracked rates are unbounded"
            )
    expo = np.stack([e.exponents for e in entries]).astype(np.int64)
    coef = np.array([e.multiplier * e.kappa for e in entries])
    src = np.array([e.source for e in entries])
    offsets = np.zeros_like(expo)
    for k, e in enumerate(entries):
        offsets[k, schema.sigma[e.source]] = 1
    U = hi + eps
    at_z = _monomials(hi, expo) * coef
    grad = _grad_sums(U, expo) * coef
    disc = np.maximum((_monomials(U, expo) - _lattice_products(U, expo, offsets, V)) * coef, 0.0)

    def by_status(a):
        return np.stack([a[:, src == tau].sum(axis=1) for tau in range(schema.n_statuses)], axis=1)

    lam_t = by_status(at_z).max(axis=1)
    L_t = _running(by_status(grad).max(axis=1))
    d_t = _running(by_status(disc).max(axis=1))

    d = net.dim
    alpha = schema.alpha(d)
    tracked = schema.tracked_species()

    def weight_vec(tau):
        v = np.zeros(d)
        if tau != DELTA:
            s = schema.sigma[tau]
            v[s] = 1.0 / alpha[s]
        return v

    r_hat = max(
        float(np.max(np.abs(weight_vec(e.target) - weight_vec(e.source)))) for e in entries
    )
    change = net.change_matrix[:, tracked]
    R_hat = float(np.max(np.abs(change))) if change.size else 0.0
    hat0 = r_hat * at_z.sum(axis=1)
    hat2 = max(_integrate(widths, by_status(at_z)[:, tau]) for tau in range(schema.n_statuses))
    omega = r_hat * eps * float(grad.sum(axis=1).max()) if grad.size else 0.0
    zeta = _integrate(widths, hi.max(axis=1) + eps) if widths.size else 0.0
    c = float(np.sum(alpha * sol.values[0]))
    sup = lambda a: float(a.max()) if a.size else 0.0  # noqa: E731
    return dict(
        Lambda_tilde0=sup(lam_t),
        Lambda_tilde1=_integrate(widths, lam_t),
        L_tilde0=sup(L_t),
        L_tilde1=_integrate(widths, L_t),
        delta_tilde0=sup(d_t),
        delta_tilde1=_integrate(widths, d_t),
        R_hat=R_hat,
        r_hat=r_hat,
        Lambda_hat0=sup(hat0),
        Lambda_hat1=_integrate(widths, hat0),
        Lambda_hat2=hat2,
        omega=omega,
        zeta=zeta,
        c=c,
    )


def tube_quantities(
    net: ReactionNetwork,
    aug: AugmentedNetwork | None,
    spec: TubeSpec,
    V: float,
) -> BoundQuantities:
    """Every tube quantity needed by the bounds, at radius ``eps`` and ``2 eps``."""
    _require_mass_action(net)
    if aug is not None and aug.base is not net:
        if aug.base != net:
            raise ValueError("aug is built on a different network")
    V = float(V)
    if not V >= 1:
        raise ValueError("V must be at least 1")
    sol, eps, t = spec.sol, float(spec.epsilon), float(spec.t)
    one = _tube(net, sol, eps, t, V)
    two = _tube(net, sol, 2 * eps, t, V)
    n = one.widths.size
    times = sol.grid[1 : n + 1].copy()
    if n:
        times[-1] = min(times[-1], t)
    R = float(np.max(np.abs(net.change_matrix)))
    extra = {}
    err = None
    if aug is not None:
        try:
            extra = _tracked(aug, sol, eps, t, V)
            extra["Lambda_hat3"] = one.integral("Lambda3")
        except BoundError as exc:
            err = str(exc)
    return BoundQuantities(
        V=V,
        epsilon=eps,
        t=t,
        min_component=float(sol.min_component),
        R=R,
        Lambda0=one.sup("Lambda0"),
        Lambda1=one.integral("Lambda0"),
        L0=one.sup("L0"),
        L1=one.integral("L0"),
        delta0=one.sup("delta0"),
        delta1=one.integral("delta0"),
        Lambda0_2eps=two.sup("Lambda0"),
        Lambda1_2eps=two.integral("Lambda0"),
        L0_2eps=two.sup("L0"),
        L1_2eps=two.integral("L0"),
        delta0_2eps=two.sup("delta0"),
        delta1_2eps=two.integral("delta0"),
        times=times,
        Lambda0_of_t=one.Lambda0,
        L0_of_t=one.L0,
        delta0_of_t=one.delta0,
        tracked_error=err,
        **extra,
    )


# ---------------------------------------------------------------- bounds


def p_bound(q: BoundQuantities, V=None, epsilon=None, gamma: float = 1.0, p0: float = 0.0) -> BoundValue:
    """Bound on the probability of leaving the ``eps`` tube by time ``t``.

    ``p0`` is the caller's bound on the initial-condition term (zero when the
    initial state is deterministic and matches ``z*``).
    """
    if V is not None and float(V) != q.V:
        raise ValueError("V differs from the one the quantities were computed for")
    if epsilon is not None and float(epsilon) != q.epsilon:
        raise ValueError("epsilon differs from the one the quantities were computed for")
    if not 0 <= p0 <= 1:
        raise ValueError("p0 must be a probability")
    eta = q.eta(gamma)
    if not eta > 0:
        raise BoundError(f"V too small for this bound (eta = {eta:.3g} <= 0)")
    exponent = E / 2 * q.Lambda1_2eps + E / 2 * q.delta1_2eps - eta * math.sqrt(q.V) / (3 * q.R)
    return BoundValue.of(p0 + 6.0 * math.exp(exponent))


def _need_tracked(q):
    if q.L_tilde1 is None:
        raise BoundError(q.tracked_error or "tracked quantities were not computed")


def single_molecule_bound(q: BoundQuantities, p_value: float, epsilon=None) -> BoundValue:
    """Bound on ``sup_t E|Y^V(t) - Y(t)|`` over ``[0, q.t]``."""
    eps = q.epsilon if epsilon is None else float(epsilon)
    if eps != q.epsilon:
        raise ValueError("epsilon differs from the one the quantities were computed for")
    if not eps < q.min_component:
        raise BoundError(f"epsilon {eps:g} must be below the fluid minimum {q.min_component:.3g}")
    _need_tracked(q)
    raw = p_value + (q.delta_tilde1 + eps * q.L_tilde1) * math.exp(2 * q.Lambda_tilde1)
    return BoundValue.of(raw)


def aggregate_bound(
    q: BoundQuantities, nu1: float, nu2: float, nu3: float, p_init: float = 0.0, p_value=None
) -> tuple[float, BoundValue]:
    """Deviation level ``nu`` and the bound on ``P(sup |pi(X^V) - X~| / V > nu)``.

    ``p_value`` defaults to :func:`p_bound` with ``gamma = 1`` and ``p0 = 0``.
    """
    _need_tracked(q)
    if min(nu1, nu2, nu3) <= 0:
        raise ValueError("nu1, nu2, nu3 must be positive")
    if p_value is None:
        p_value = p_bound(q).raw
    nu = math.exp(q.Lambda_hat1) * (
        q.R_hat * nu1 + q.r_hat * nu2 + nu3 + q.R_hat * q.delta1 + q.omega * q.zeta
    )
    sq = math.sqrt(q.V)
    raw = (
        6.0 * math.exp(E * q.Lambda_hat3 / 2 - nu1 * sq / 3)
        + 6.0 * math.exp(E * q.c * q.Lambda_hat2 / 2 - nu2 * sq / 3)
        + p_init
        + p_value
    )
    return nu, BoundValue.of(raw)


@dataclass(frozen=True)
class BoundReport:
    inputs: dict
    quantities: BoundQuantities
    p_bound: BoundValue | None
    single_bound: BoundValue | None
    aggregate_bound: tuple | None
    errors: dict

    def as_dict(self) -> dict:
        agg = None
        if self.aggregate_bound is not None:
            nu, val = self.aggregate_bound
            agg = {"nu": nu, **asdict(val), "nu_exceeds_epsilon": nu >= self.inputs["epsilon"]}
        return {
            "inputs": self.inputs,
            "quantities": self.quantities.as_dict(),
            "p_bound": asdict(self.p_bound) if self.p_bound else None,
            "single_bound": asdict(self.single_bound) if self.single_bound else None,
            "aggregate_bound": agg,
            "errors": self.errors,
        }


def evaluate_bounds(
    net: ReactionNetwork,
    aug: AugmentedNetwork | None,
    sol: FluidSolution,
    V: float,
    epsilon: float,
    t: float | None = None,
    *,
    gamma: float = 1.0,
    p0: float = 0.0,
    nu=(None, None, None),
    p_init: float = 0.0,
) -> BoundReport:
    """Every bound that applies, with the reason for each one that does not."""
    t = sol.T if t is None else float(t)
    q = tube_quantities(net, aug, TubeSpec(sol, epsilon, t), V)
    errors = {}
    p = single = agg = None
    try:
        p = p_bound(q, gamma=gamma, p0=p0)
    except BoundError as exc:
        errors["p_bound"] = str(exc)
    if aug is not None:
        if p is not None:
            try:
                single = single_molecule_bound(q, p.raw)
            except BoundError as exc:
                errors["single_bound"] = str(exc)
        else:
            errors["single_bound"] = "needs p_bound"
        if all(v is not None for v in nu):
            if p is not None:
                try:
                    agg = aggregate_bound(q, *nu, p_init=p_init, p_value=p.raw)
                except BoundError as exc:
                    errors["aggregate_bound"] = str(exc)
            else:
                errors["aggregate_bound"] = "needs p_bound"
    inputs = dict(V=float(V), epsilon=float(epsilon), gamma=gamma, t=t, p0=p0, p_init=p_init,
                  nu1=nu[0], nu2=nu[1], nu3=nu[2])
    return BoundReport(inputs, q, p, single, agg, errors)


# ---------------------------------------------------------------- SIS closed forms


def sis_rough_p_bound(kappa1, kappa2, mass, epsilon, t, V) -> float:
    """Closed-form SIS tube-exit bound built from the rough constant estimates.

    ``mass`` is the conserved total ``z_S + z_I``. Unclamped.
    """
    a = mass + 2 * epsilon
    return 6.0 * math.exp(
        t / 2 * a * (kappa1 * a + kappa2)
        - epsilon * math.sqrt(V) / 6 * math.exp(-t * (kappa1 * a - kappa2))
    )


def sis_aggregate_walkthrough(kappa1, kappa2, T, epsilon, V) -> float:
    """Three-exponential SIS aggregate bound with ``nu = eps exp(-(k1 + k2) T)``."""
    nu = epsilon * math.exp(-(kappa1 + kappa2) * T)
    sq = math.sqrt(V)
    g = 1 + nu / (kappa1 * T)
    return (
        12 * math.exp(kappa1 * E * T / 2 - nu / 24 * sq)
        + 12 * math.exp(kappa2 * E * T / 2 - nu / 24 * sq)
        + 6 * math.exp(
            kappa1 * E * T / 2 * g**2
            + kappa2 * E * T / 2 * g
            - nu / (12 * kappa1 * T) * math.exp(-T * (kappa1 - kappa2) - nu) * sq
        )
    )


def grid_search(evaluate, grid: dict):
    """Minimise ``evaluate(**params)`` over the Cartesian product of ``grid``.

    Combinations raising :class:`BoundError` are skipped. Returns
    ``(best_params, best_value)`` or ``(None, inf)``.
    """
    names = list(grid)
    best, best_val = None, math.inf
    for combo in product(*(grid[n] for n in names)):
        params = dict(zip(names, combo))
        try:
            val = float(evaluate(**params))
        except BoundError:
            continue
        if val < best_val:
            best, best_val = params, val
    return best, best_val
