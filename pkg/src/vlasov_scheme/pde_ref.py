"""Explicit finite-difference references for the limiting Hamilton-Jacobi and Fokker-Planck equations.

HJ, integrated backward from ``t = 0``::

    du/dt = -nu u_xx + |u_x|^2 / 2 + P(t, x),    u(0) = f0

FP, integrated forward from ``T``::

    drho/dt = nu rho_xx - div(rho Y),             Y = -u_x

Both use centred differences on the periodic grid.  At ``nu = 1/2`` the HJ
equation linearizes under ``w = exp(-u)`` to a heat equation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InstabilityError, NumericalConsistencyError
from .measures import Density
from .model import PotentialSpec, eval_V, mean_field
from .torus_grid import GridField, TorusGrid, gradient, laplacian_values, log_convolve_exp, wrapped_gaussian

BLOWUP = 1e6
FP_MASS_TOL = 1e-8
CLIP_TOL = 1e-12


def stable_dt(grid: TorusGrid, nu: float, factor: float = 0.25) -> float:
    """``factor * dx^2 / nu``; ``factor <= 1/4`` satisfies the explicit stability bound."""
    return factor * grid.dx**2 / nu


def _check_cfl(grid: TorusGrid, nu: float, dt: float):
    if not nu > 0:
        raise ConfigurationError("viscosity must be positive")
    limit = grid.dx**2 / (4.0 * nu * grid.p)
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")


def _n_steps(span: float, dt: float) -> tuple:
    steps = int(np.ceil(span / dt - 1e-9))
    return steps, span / steps


@dataclass
class TimeSeries:
    """Fields saved at increasing times; linear interpolation in between."""

    times: np.ndarray
    values: np.ndarray  # shape (len(times), *grid.shape)
    grid: TorusGrid

    def at(self, t: float) -> np.ndarray:
        times = self.times
        if t <= times[0]:
            return self.values[0]
        if t >= times[-1]:
            return self.values[-1]
        k = int(np.searchsorted(times, t)) - 1
        k = min(max(k, 0), len(times) - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def field(self, t: float) -> GridField:
        return GridField(self.grid, self.at(t))


def potential_provider(spec: PotentialSpec, grid: TorusGrid, rho: TimeSeries | None = None,
                       interaction_weight: float = 1.0):
    """``t -> V(t) + w W^{rho(t)}`` as raw arrays; ``rho`` is needed only when ``W != 0``."""
    if spec.has_interaction and rho is None:
        raise ConfigurationError("a density history is required for a nonzero interaction")

    def provider(t: float) -> np.ndarray:
        out = eval_V(spec, t, grid).values
        if spec.has_interaction:
            out = out + interaction_weight * mean_field(spec, Density.normalized(grid, rho.at(t))).values
        return out

    return provider


def solve_hj(f0: GridField, potential, nu: float, T: float, dt: float, save_every: float | None = None,
             ) -> TimeSeries:
    """Integrate the HJ equation backward from 0 to ``T < 0``.

    ``potential`` maps a time to a grid array (or is ``None`` for ``P = 0``).
    Returns the solution on increasing saved times from ``T`` to 0.
    """
    grid = f0.grid
    if not T < 0:
        raise ConfigurationError("HJ start time must be negative")
    _check_cfl(grid, nu, dt)
    steps, dt = _n_steps(-T, dt)
    stride = 1 if save_every is None else max(1, int(round(save_every / dt)))
    u = f0.values.copy()
    saved_t = [0.0]
    saved_u = [u.copy()]
    for k in range(steps):
        t = -k * dt
        grad = gradient(GridField(grid, u))
        rhs = -nu * laplacian_values(u, grid) + 0.5 * np.sum(grad**2, axis=0)
        if potential is not None:
            rhs = rhs + potential(t)
        u = u - dt * rhs
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            raise InstabilityError(f"HJ solution blew up at t={t - dt:.4f}")
        if (k + 1) % stride == 0 or k + 1 == steps:
            saved_t.append(-(k + 1) * dt)
            saved_u.append(u.copy())
    order = np.argsort(saved_t)
    return TimeSeries(np.array(saved_t)[order], np.array(saved_u)[order], grid)


def drift_from_hj(u: TimeSeries):
    """``t -> -grad u(t)`` with ``u`` linearly interpolated in time."""
    def drift(t: float) -> np.ndarray:
        return -gradient(GridField(u.grid, u.at(t)))
    return drift


def _divergence_flux(rho: np.ndarray, y: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``div(rho Y)`` in flux form with face values averaged from the neighbours."""
    out = np.zeros(grid.shape)
    for a in range(grid.p):
        flux = rho * y[a]
        face = 0.5 * (flux + np.roll(flux, -1, axis=a))
        out += (face - np.roll(face, 1, axis=a)) / grid.dx
    return out


def solve_fp(mu: Density, drift, nu: float, T: float, t_end: float, dt: float,
             save_times=None) -> TimeSeries:
    """Integrate the FP equation forward from ``T`` to ``t_end``.

    ``drift`` maps a time to an array of shape ``(p, *grid.shape)`` or is
    ``None``.  Mass is conserved to rounding by the flux form.
    """
    grid = mu.grid
    _check_cfl(grid, nu, dt)
    if not t_end > T:
        raise ConfigurationError("FP end time must follow the start time")
    steps, dt = _n_steps(t_end - T, dt)
    wanted = sorted(set([T, t_end] + ([] if save_times is None else list(save_times))))
    marks = {int(round((t - T) / dt)): t for t in wanted}
    rho = mu.values.copy()
    saved_t, saved_r = [], []
    if 0 in marks:
        saved_t.append(T)
        saved_r.append(rho.copy())
    for k in range(steps):
        t = T + k * dt
        rhs = nu * laplacian_values(rho, grid)
        if drift is not None:
            rhs = rhs - _divergence_flux(rho, drift(t), grid)
        rho = rho + dt * rhs
        low = float(rho.min())
        if low < -CLIP_TOL:
            raise NumericalConsistencyError(f"FP density negative ({low:.3e}) at t={t + dt:.4f}")
        if low < 0:
            rho = np.maximum(rho, 0.0)
        mass = float(np.sum(rho) * grid.cell_volume)
        if abs(mass - 1.0) > FP_MASS_TOL:
            raise NumericalConsistencyError(f"FP mass drift {mass - 1.0:.3e}")
        rho = rho / mass
        if k + 1 in marks:
            saved_t.append(marks[k + 1])
            saved_r.append(rho.copy())
    return TimeSeries(np.array(saved_t), np.array(saved_r), grid)


def hopf_cole_reference(f0: GridField, T: float) -> GridField:
    """Exact ``nu = 1/2``, ``P = 0`` HJ solution: ``-log(G_{|T|} * exp(-f0))``."""
    kernel = wrapped_gaussian(f0.grid, abs(T))
    return GridField(f0.grid, -log_convolve_exp(kernel, -f0.values))


@dataclass
class CoupledReference:
    u: TimeSeries
    rho: TimeSeries
    iterations: int
    residual: float


def solve_coupled(mu: Density, f0_of, spec: PotentialSpec, nu: float, T: float, dt: float,
                  save_every: float = 1.0 / 256, tol: float = 1e-8, max_iter: int = 100,
                  damping: float = 0.5) -> CoupledReference:
    """Picard iteration between HJ and FP for an interacting potential.

    ``f0_of`` maps the final density (grid array) to the terminal cost field.
    """
    grid = mu.grid
    times = np.linspace(T, 0.0, int(round(-T / save_every)) + 1)
    rho = TimeSeries(times, np.array([mu.values] * len(times)), grid)
    residual = np.inf
    for it in range(1, max_iter + 1):
        f0 = f0_of(rho.values[-1])
        u = solve_hj(f0, potential_provider(spec, grid, rho), nu, T, dt, save_every)
        new = solve_fp(mu, drift_from_hj(u), nu, T, 0.0, dt, save_times=times)
        residual = float(np.max(np.abs(new.values - rho.values)))
        alpha = 1.0 if it == 1 else damping
        rho = TimeSeries(times, alpha * new.values + (1 - alpha) * rho.values, grid)
        if residual < tol:
            break
    return CoupledReference(u, rho, it, residual)
