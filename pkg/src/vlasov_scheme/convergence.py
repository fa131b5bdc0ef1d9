"""Convergence of the scheme to the finite-difference HJ / FP references as ``n`` grows."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .measures import Density, wasserstein1
from .model import FinalCondition, PotentialSpec, final_derivative
from .pde_ref import drift_from_hj, potential_provider, solve_coupled, solve_fp, solve_hj
from .scheme import SchemeConfig, solve_fixed_point
from .torus_grid import GridField


@dataclass
class Reference:
    u: object
    rho: object


@dataclass
class ConvergenceRow:
    n: int
    sup_err_f: float
    w1_err: dict
    value: float
    value_ref: float
    fp_iters: int
    fp_residual: float
    wall_ms: float


def reference_solution(mu: Density, U: FinalCondition, spec: PotentialSpec, T: float, nu: float = 0.5,
                       dt_factor: float = 0.125, probe_times=()) -> Reference:
    """HJ then FP with drift ``-u_x``; the interacting case iterates the pair to a fixed point."""
    grid = mu.grid
    dt = dt_factor * grid.dx**2
    save_every = 1.0 / 1024
    times = sorted(set([T, 0.0] + list(probe_times)))
    if spec.has_interaction or U.kind != "linear":
        ref = solve_coupled(mu, lambda r: final_derivative(U, Density.normalized(grid, r)), spec, nu, T, dt,
                            save_every=save_every)
        return Reference(ref.u, ref.rho)
    f0 = final_derivative(U, mu)
    u = solve_hj(f0, potential_provider(spec, grid), nu, T, dt, save_every)
    rho = solve_fp(mu, drift_from_hj(u), nu, T, 0.0, dt, save_times=times)
    return Reference(u, rho)


def convergence_study(mu: Density, U: FinalCondition, spec: PotentialSpec, ns, T: float = -1.0,
                      probe_times=(-0.5, -0.25), nu: float = 0.5, dt_factor: float = 0.125,
                      reference: Reference | None = None, **scheme_kwargs) -> list:
    """Errors of the scheme against the reference at ``T`` (costs) and at the probe times (densities)."""
    if reference is None:
        reference = reference_solution(mu, U, spec, T, nu, dt_factor, probe_times)
    grid = mu.grid
    rows = []
    for n in ns:
        s = int(round(-T * n))
        start = time.perf_counter()
        sol = solve_fixed_point(mu, U, spec, SchemeConfig(n, s, m=int(np.ceil(-T)), **scheme_kwargs))
        wall = 1e3 * (time.perf_counter() - start)
        u_T = reference.u.at(T)
        err_f = float(np.max(np.abs(sol.costs[0].values - u_T)))
        w1 = {}
        for t in list(probe_times) + [0.0]:
            ref_rho = Density.normalized(grid, reference.rho.at(t))
            w1[t] = wasserstein1(sol.density_at(t), ref_rho)
        value_ref = float(np.sum(u_T * mu.values) * grid.cell_volume)
        rows.append(ConvergenceRow(n, err_f, w1, sol.value.total, value_ref, sol.iterations,
                                   sol.fp_residual, wall))
    return rows


def fitted_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])
