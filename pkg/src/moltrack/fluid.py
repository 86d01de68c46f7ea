"""Fluid limit: fixed-step RK4 for the deterministic reaction system.

The solver stores the vector field at every knot, so the trajectory can be
evaluated anywhere in ``[0, T]`` by cubic Hermite interpolation. The grid is
uniform; the requested step is shrunk so that it divides ``T`` exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .network import ReactionNetwork, deterministic_rates

__all__ = ["FluidError", "FluidSolution", "solve_fluid", "NEGATIVE_TOL"]

NEGATIVE_TOL = 1e-12
DEFAULT_STEPS = 10_000


class FluidError(RuntimeError):
    pass


@numba.njit(cache=True)
def _field(z, reactant, change, kappa, out):
    n, d = reactant.shape
    for s in range(d):
        out[s] = 0.0
    for r in range(n):
        v = kappa[r]
        for s in range(d):
            for _ in range(reactant[r, s]):
                v *= z[s]
        for s in range(d):
            if change[r, s] != 0:
                out[s] += change[r, s] * v


@numba.njit(cache=True)
def _rk4_mass_action(z0, h, nsteps, reactant, change, kappa, neg_tol):
    d = z0.shape[0]
    values = np.empty((nsteps + 1, d))
    derivs = np.empty((nsteps + 1, d))
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    z = z0.copy()
    values[0] = z
    _field(z, reactant, change, kappa, k1)
    derivs[0] = k1
    for i in range(nsteps):
        for s in range(d):
            tmp[s] = z[s] + 0.5 * h * k1[s]
        _field(tmp, reactant, change, kappa, k2)
        for s in range(d):
            tmp[s] = z[s] + 0.5 * h * k2[s]
        _field(tmp, reactant, change, kappa, k3)
        for s in range(d):
            tmp[s] = z[s] + h * k3[s]
        _field(tmp, reactant, change, kappa, k4)
        for s in range(d):
            z[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s])
            if not math.isfinite(z[s]):
                return values, derivs, i + 1, 2
            if z[s] < 0.0:
                if z[s] < -neg_tol:
                    return values, derivs, i + 1, 1
                z[s] = 0.0
        values[i + 1] = z
        _field(z, reactant, change, kappa, k1)
        derivs[i + 1] = k1
    return values, derivs, nsteps, 0


def _rk4_python(net, z0, h, nsteps, neg_tol):
    zeta = net.change_matrix.T.astype(float)

    def f(z):
        return zeta @ deterministic_rates(net, z)

    d = z0.shape[0]
    values = np.empty((nsteps + 1, d))
    derivs = np.empty((nsteps + 1, d))
    z = z0.copy()
    values[0] = z
    k1 = f(z)
    derivs[0] = k1
    for i in range(nsteps):
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            return values, derivs, i + 1, 2
        if np.any(z < -neg_tol):
            return values, derivs, i + 1, 1
        z = np.maximum(z, 0.0)
        values[i + 1] = z
        k1 = f(z)
        derivs[i + 1] = k1
    return values, derivs, nsteps, 0


def _integrate(net, z0, T, nsteps):
    h = T / nsteps
    if net.is_mass_action:
        values, derivs, at, code = _rk4_mass_action(
            z0,
            h,
            nsteps,
            np.ascontiguousarray(net.reactant_matrix),
            np.ascontiguousarray(net.change_matrix),
            np.ascontiguousarray(net.rate_constants),
            NEGATIVE_TOL,
        )
    else:
        values, derivs, at, code = _rk4_python(net, z0, h, nsteps, NEGATIVE_TOL)
    if code == 1:
        raise FluidError(f"solution left the orthant at t={at * h:.6g}")
    if code == 2:
        raise FluidError(f"solution blew up (non-finite) at t={at * h:.6g}")
    return values, derivs


def _hermite(t0, t1, y0, y1, d0, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


@dataclass(frozen=True, eq=False)
class FluidSolution:
    """Dense fluid trajectory on a uniform grid.

    ``values[i]`` and ``derivs[i]`` hold ``Z(grid[i])`` and ``Z'(grid[i])``.
    ``min_component`` is the smallest coordinate seen on a 10x refinement of
    the grid.
    """

    species: tuple
    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    min_component: float
    halving_error: float | None = None

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def n_cells(self) -> int:
        return len(self.grid) - 1

    def _cell(self, t):
        k = np.searchsorted(self.grid, t, side="right") - 1
        return np.clip(k, 0, max(self.n_cells - 1, 0))

    def eval(self, t):
        """``Z(t)``; ``t`` may be a scalar or an array (rows follow ``t``)."""
        tt = np.asarray(t, dtype=float)
        if np.any(tt < 0) or np.any(tt > self.T) or np.any(np.isnan(tt)):
            raise ValueError(f"t outside [0, {self.T}]")
        if self.n_cells == 0:
            out = np.broadcast_to(self.values[0], tt.shape + self.values.shape[1:]).copy()
            return out
        k = self._cell(tt)
        out = _hermite(
            self.grid[k][..., None],
            self.grid[k + 1][..., None],
            self.values[k],
            self.values[k + 1],
            self.derivs[k],
            self.derivs[k + 1],
            tt[..., None],
        )
        # knots are reproduced exactly
        exact = self.grid[k] == tt
        out[exact] = self.values[k][exact]
        end = self.grid[k + 1] == tt
        out[end] = self.values[k + 1][end]
        return out

    def refined(self, refine: int = 10):
        """Times and values sampled ``refine`` times per cell, knots included."""
        if self.n_cells == 0:
            return self.grid.copy(), self.values.copy()
        s = np.arange(refine) / refine
        t = (self.grid[:-1, None] + np.diff(self.grid)[:, None] * s[None, :]).ravel()
        t = np.append(t, self.grid[-1])
        return t, self.eval(t)

    def cell_envelope(self, refine: int = 10):
        """Per-cell lower and upper envelopes of ``Z``, shape ``(n_cells, d)``.

        Sample extrema are widened by half a sample spacing times the largest
        slope seen in the cell, which covers the interpolant between samples.
        """
        n, d = self.n_cells, self.values.shape[1]
        if n == 0:
            return self.values[:1].copy(), self.values[:1].copy()
        _, z = self.refined(refine)
        body = z[:-1].reshape(n, refine, d)
        ends = z[refine::refine].reshape(n, 1, d)
        samples = np.concatenate([body, ends], axis=1)
        lo = samples.min(axis=1)
        hi = samples.max(axis=1)
        slope = np.maximum(np.abs(self.derivs[:-1]), np.abs(self.derivs[1:]))
        spread = (hi - lo) / (np.diff(self.grid)[:, None] / refine)
        slope = np.maximum(slope, spread)
        margin = 0.5 * slope * np.diff(self.grid)[:, None] / refine * 1.1
        return np.maximum(lo - margin, 0.0), hi + margin

    def to_csv(self, path, times=None) -> Path:
        path = Path(path)
        times = self.grid if times is None else np.asarray(times, dtype=float)
        z = self.eval(times)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *self.species])
            for t, row in zip(times, z):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
        return path


def solve_fluid(
    net: ReactionNetwork,
    z0,
    T: float,
    step: float | None = None,
    *,
    check_halving: bool = True,
    halving_tol: float = 1e-6,
) -> FluidSolution:
    """Integrate ``dZ/dt = sum (y' - y) lambda(Z)`` from ``z0`` over ``[0, T]``.

    With ``check_halving`` the solve is repeated at half the step and
    :class:`FluidError` ("step too large") is raised if the two disagree by
    more than ``halving_tol`` in sup-norm.
    """
    z0 = np.array(z0, dtype=float)
    if z0.shape != (net.dim,):
        raise ValueError(f"z0 must have length {net.dim}")
    if np.any(z0 < 0) or not np.all(np.isfinite(z0)):
        raise ValueError("z0 must be finite and non-negative")
    T = float(T)
    if not T >= 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        grid = np.zeros(1)
        derivs = (net.change_matrix.T @ deterministic_rates(net, z0))[None, :]
        return FluidSolution(net.species, grid, z0[None, :].copy(), derivs, float(z0.min(initial=np.inf)))
    if step is None:
        nsteps = DEFAULT_STEPS
    else:
        if not step > 0:
            raise ValueError("step must be positive")
        nsteps = max(1, math.ceil(T / step - 1e-9))
    values, derivs = _integrate(net, z0, T, nsteps)
    err = None
    if check_halving:
        fine, _ = _integrate(net, z0, T, 2 * nsteps)
        err = float(np.max(np.abs(fine[::2] - values)))
        if err > halving_tol:
            raise FluidError(
                f"step too large: halving the step changes the solution by {err:.3g} "
                f"(tolerance {halving_tol:.3g})"
            )
    grid = np.linspace(0.0, T, nsteps + 1)
    for a in (values, derivs, grid):
        a.setflags(write=False)
    sol = FluidSolution(net.species, grid, values, derivs, np.nan, err)
    _, z = sol.refined(10)
    object.__setattr__(sol, "min_component", float(z.min()))
    return sol
