"""Multi-step scheme: backward recursion, forward propagation and the mean-field fixed point.

Times are ``t_i = (-s + i)/n`` for ``i = 0..s``.  Step ``i`` moves mass from
``t_i`` to ``t_{i+1}``; its kernel is built from the arrival cost ``f_{i+1}``
and the potential ``P_i = V(t_i) + W^{mu_i}`` charged at departure, so that

    f_i = -P_i/n - log(G_{1/n} * exp(-f_{i+1})),    f_s = U'(mu_s).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalConsistencyError
from .measures import Density, mixture, wasserstein1
from .model import FinalCondition, PotentialSpec, final_derivative, final_value, total_potential
from .step_kernel import (
    GibbsKernel,
    build_kernel,
    gaussian_normalization,
    kinetic_term,
    potential_term,
    push_forward,
)
from .torus_grid import GridField, gradient, hessian, log_convolve_exp, wrapped_gaussian

logger = logging.getLogger(__name__)

REPLAY_TOL = 1e-10


@dataclass(frozen=True)
class SchemeConfig:
    n: int
    s: int
    m: int = 1
    damping: float = 0.5
    fp_tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        for name in ("n", "s", "m", "max_iter"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.s > self.m * self.n:
            raise ConfigurationError(f"horizon s={self.s} exceeds m*n={self.m * self.n}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError(f"damping must lie in (0, 1], got {self.damping!r}")
        if not self.fp_tol > 0:
            raise ConfigurationError("fp_tol must be positive")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def times(self) -> np.ndarray:
        return np.arange(-self.s, 1) / self.n


@dataclass(frozen=True)
class ValueReport:
    """Discrete value split into parts, each net of the Gaussian normalization."""

    total: float
    kinetic_entropy: float
    potential: float
    final: float
    normalization: float

    def as_dict(self) -> dict:
        return dict(total=self.total, kinetic_entropy=self.kinetic_entropy, potential=self.potential,
                    final=self.final, normalization=self.normalization)


@dataclass(eq=False)
class SchemeSolution:
    times: np.ndarray
    densities: list
    costs: list
    kernels: list
    n: int
    fp_residual: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list)
    value: ValueReport | None = None

    @property
    def s(self) -> int:
        return len(self.kernels)

    @property
    def potentials(self) -> list:
        return [K.P for K in self.kernels]

    def density_at(self, t: float) -> Density:
        return self.densities[self.index_of(t)]

    def cost_at(self, t: float) -> GridField:
        return self.costs[self.index_of(t)]

    def index_of(self, t: float) -> int:
        i = int(round(t * self.n)) + self.s
        if not 0 <= i <= self.s or abs(self.times[i] - t) > 1e-12:
            raise ConfigurationError(f"time {t} is not on the scheme grid")
        return i


def backward_recursion(f0: GridField, potentials, n: int):
    """Costs ``f_0..f_s`` and kernels ``K_0..K_{s-1}`` from the final cost ``f0``.

    ``potentials[i]`` is the full-weight potential at ``t_i = (-s + i)/n``.
    """
    s = len(potentials)
    gaussian = wrapped_gaussian(f0.grid, 1.0 / n)
    costs = [None] * (s + 1)
    kernels = [None] * s
    costs[s] = f0
    for i in range(s - 1, -1, -1):
        try:
            K = build_kernel(costs[i + 1], potentials[i], n, gaussian)
        except (NumericalConsistencyError, ConfigurationError) as exc:
            raise NumericalConsistencyError(f"backward recursion failed at t={(i - s) / n}: {exc}") from exc
        kernels[i] = K
        costs[i] = K.f_prev
    return costs, kernels


def forward_propagate(mu_start: Density, kernels) -> list:
    """``mu_{i+1} = mu_i * gamma_i`` for every stored kernel."""
    densities = [mu_start]
    for K in kernels:
        densities.append(push_forward(densities[-1], K))
    return densities


def trajectory_distance(a: Density, b: Density) -> float:
    """``d_1`` for ``p = 1``; for ``p = 2`` the upper bound ``(sqrt 2 / 4) ||a - b||_1``."""
    if a.grid.p == 1:
        return wasserstein1(a, b)
    l1 = float(np.sum(np.abs(a.values - b.values)) * a.grid.cell_volume)
    return np.sqrt(2.0) / 4.0 * l1


def _potentials(spec: PotentialSpec, times, densities) -> list:
    return [total_potential(spec, t, mu, 1.0) for t, mu in zip(times[:-1], densities[:-1])]


def is_decoupled(U: FinalCondition, spec: PotentialSpec) -> bool:
    """True when neither the potential nor ``U'`` depends on the trajectory."""
    return U.kind == "linear" and not spec.has_interaction


def sweep(mu: Density, U: FinalCondition, spec: PotentialSpec, cfg: SchemeConfig, trajectory):
    """One forward-backward pass: potentials and ``U'`` from ``trajectory``, then recursion and propagation."""
    times = cfg.times()
    pots = _potentials(spec, times, trajectory)
    f0 = final_derivative(U, trajectory[-1])
    costs, kernels = backward_recursion(f0, pots, cfg.n)
    return costs, kernels, forward_propagate(mu, kernels)


def solve_fixed_point(mu: Density, U: FinalCondition, spec: PotentialSpec, cfg: SchemeConfig,
                      initial=None, on_iterate=None) -> SchemeSolution:
    """Damped Picard iteration on the density trajectory.

    The residual of an iterate is ``sup_i d_1(T(traj)_i, traj_i)`` where ``T``
    is one sweep; the returned solution is the last ``T(traj)`` with its
    kernels.  Non-convergence is reported through ``fp_residual``, not raised.
    """
    times = cfg.times()
    traj = list(initial) if initial is not None else [mu] * (cfg.s + 1)
    if len(traj) != cfg.s + 1:
        raise ConfigurationError("initial trajectory length must be s + 1")
    history = []
    for it in range(1, cfg.max_iter + 1):
        costs, kernels, new = sweep(mu, U, spec, cfg, traj)
        if on_iterate is not None:
            on_iterate(it, new)
        if is_decoupled(U, spec):
            # the sweep ignores its input, so T(new) = new exactly
            residual = 0.0
        else:
            residual = max(trajectory_distance(a, b) for a, b in zip(new, traj))
        history.append(residual)
        logger.debug("fixed point iteration %d residual %.3e", it, residual)
        if residual < cfg.fp_tol:
            break
        alpha = 1.0 if it == 1 else cfg.damping
        traj = [new[0]] + [mixture(a, b, alpha) for a, b in zip(new[1:], traj[1:])]
    else:
        logger.warning("fixed point not converged after %d iterations (residual %.3e)", cfg.max_iter, residual)
    sol = SchemeSolution(times, new, costs, kernels, cfg.n, residual, it, history)
    sol.value = discrete_value(sol, U, spec)
    return sol


def discrete_value(sol: SchemeSolution, U: FinalCondition, spec: PotentialSpec) -> ValueReport:
    """Sum of the step costs along the solution plus ``U(mu_s)``."""
    kinetic = 0.0
    potential = 0.0
    for i, K in enumerate(sol.kernels):
        kinetic += kinetic_term(sol.densities[i], K)
        potential += potential_term(sol.densities[i], sol.times[i], spec, sol.n)
    final = final_value(U, sol.densities[-1])
    norm = sol.s * gaussian_normalization(sol.densities[0].grid.p, sol.n)
    return ValueReport(kinetic + potential + final, kinetic, potential, final, float(norm))


def linear_value(sol: SchemeSolution) -> float:
    """``int f_0 dmu_0``; equals the discrete value when ``U`` is linear and ``W = 0``."""
    mu = sol.densities[0]
    return float(np.sum(sol.costs[0].values * mu.values) * mu.grid.cell_volume)


def replay_residuals(sol: SchemeSolution) -> dict:
    """Recompute the recursion and the propagation from stored kernels."""
    rec = 0.0
    prop = 0.0
    for i, K in enumerate(sol.kernels):
        log_i = log_convolve_exp(K.gaussian, -sol.costs[i + 1].values)
        rec = max(rec, float(np.max(np.abs(sol.costs[i].values - (-K.P.values / sol.n - log_i)))))
        nxt = push_forward(sol.densities[i], K)
        prop = max(prop, float(np.max(np.abs(nxt.values - sol.densities[i + 1].values))))
    return {"recursion": rec, "propagation": prop}


def semigroup_check(mu: Density, U: FinalCondition, spec: PotentialSpec, cfg: SchemeConfig,
                    s1: int, s2: int) -> float:
    """``|A - B|`` with ``A`` the ``s``-step value and ``B`` the first ``s2`` step costs plus
    the re-solved ``s1``-step value from the intermediate density.

    ``s1`` counts the steps nearest the final time; ``s1 + s2 = cfg.s``.
    """
    if s1 + s2 != cfg.s:
        raise ConfigurationError(f"split {s1}+{s2} does not add up to s={cfg.s}")
    if s1 < 0 or s2 < 0:
        raise ConfigurationError("split parts must be nonnegative")
    if s1 == 0 or s2 == 0:
        return 0.0
    full = solve_fixed_point(mu, U, spec, cfg)
    head = 0.0
    for i in range(s2):
        K = full.kernels[i]
        head += kinetic_term(full.densities[i], K) + potential_term(full.densities[i], full.times[i], spec, cfg.n)
    tail_cfg = SchemeConfig(cfg.n, s1, cfg.m, cfg.damping, cfg.fp_tol, cfg.max_iter)
    tail = solve_fixed_point(full.densities[s2], U, spec, tail_cfg)
    return abs(full.value.total - (head + tail.value.total))


@dataclass(frozen=True)
class GaussianDiagnostics:
    """Per-time Gaussian approximation of the kernels.

    ``Q[i]`` has shape ``(p, p, *grid.shape)`` and ``beta[i]`` has shape
    ``(p, *grid.shape)``; entry ``i`` is built from ``costs[i]``, i.e. it
    describes the kernel that arrives at time ``t_i``.
    """

    Q: list
    beta: list
    constant: float

    def beta_sup(self, i: int) -> float:
        return float(np.max(np.linalg.norm(self.beta[i], axis=0)))

    def q_dev_sup(self, i: int) -> float:
        q = self.Q[i]
        p = q.shape[0]
        dev = q - np.eye(p).reshape((p, p) + (1,) * (q.ndim - 2))
        return float(np.max(np.abs(dev)))


def gaussian_diagnostics(costs, n: int) -> GaussianDiagnostics:
    """``Q = [Id + f''/n]^{-1}`` and ``beta = Q f'/n`` from centred differences of each cost."""
    Qs, betas = [], []
    worst = 0.0
    for f in costs:
        p = f.grid.p
        size = f.grid.size
        hess = hessian(f).reshape(p, p, size).transpose(2, 0, 1)
        grad = gradient(f).reshape(p, size).T
        mat = np.eye(p) + hess / n
        if np.any(np.linalg.det(mat) <= 0):
            raise NumericalConsistencyError("Id + f''/n is not positive definite; n too small for this cost")
        q = np.linalg.inv(mat)
        beta = np.einsum("kij,kj->ki", q, grad) / n
        Qs.append(q.transpose(1, 2, 0).reshape((p, p) + f.grid.shape))
        betas.append(beta.T.reshape((p,) + f.grid.shape))
        dev = float(np.max(np.abs(q - np.eye(p))))
        worst = max(worst, n * (float(np.max(np.linalg.norm(beta, axis=1))) + dev))
    if not np.isfinite(worst):
        raise NumericalConsistencyError("non-finite Gaussian diagnostics")
    return GaussianDiagnostics(Qs, betas, worst)


def difference_norms(f: GridField, order: int = 4) -> np.ndarray:
    """``max |D^k f|`` for ``k = 0..order`` by repeated forward differences along each axis."""
    out = np.zeros(order + 1)
    for axis in range(f.grid.p):
        u = f.values
        for k in range(order + 1):
            out[k] = max(out[k], float(np.max(np.abs(u))) / f.grid.dx**k)
            u = np.roll(u, -1, axis=axis) - u
    return out
