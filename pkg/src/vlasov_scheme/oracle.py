"""Brute-force ground truth for one step: entropic mirror descent over explicit kernel tables.

Nothing here reuses the factored kernel algebra of :mod:`step_kernel`; the
objective is evaluated by plain quadrature over ``(x, v)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import ConfigurationError, DivergenceError, NumericalConsistencyError, SizeError
from .measures import Density, RawKernel, VelocityConfig, action_raw, shifted_samples
from .model import FinalCondition, PotentialSpec, eval_V, mean_field
from .step_kernel import GibbsKernel, materialize

MAX_ORACLE_NODES = 64
MAX_ORACLE_NV = 256
WINDOW = 50


@dataclass
class OracleResult:
    """Minimizing kernel with its objective and the per-iteration objective trace.

    ``objective`` is the raw functional ``action + U(mu * gamma)``; ``value``
    additionally subtracts the potential term and the Gaussian normalization,
    making it comparable with the scheme's one-step value.
    """

    kernel: RawKernel
    objective: float
    value: float
    trace: np.ndarray
    iterations: int
    converged: bool


class _Objective:
    """``gamma -> action_raw(gamma) + U(mu * gamma)`` with its row-wise natural gradient."""

    def __init__(self, mu: Density, U: FinalCondition, h: float, v_axis: np.ndarray):
        self.mu = mu
        self.U = U
        self.h = h
        self.v_axis = v_axis
        grid = mu.grid
        probe = RawKernel.from_log(grid, v_axis, np.zeros((grid.size, v_axis.size ** grid.p)))
        self.cell = probe.cell
        self.v_points = probe.velocity_points()
        self.kinetic = np.sum(self.v_points**2, axis=1) / (2.0 * h)
        # f_k(x_i - v_j), fixed for the whole run
        self.shifted = [shifted_samples(f, self.v_points) for f in U.fields]
        self.weights = mu.values.ravel() * grid.cell_volume

    def moments(self, gamma: np.ndarray) -> np.ndarray:
        return np.array([self.weights @ (np.sum(s * gamma, axis=1) * self.cell) for s in self.shifted])

    def __call__(self, kernel: RawKernel) -> float:
        s = self.moments(kernel.values)
        return action_raw(kernel, self.mu, self.h) + self.U.value_from_moments(s)

    def direction(self, log_gamma: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """``|v|^2/2h + log gamma + U'(mu * gamma)(x - v)``; the constant 1 drops on renormalization."""
        coeffs = self.U.derivative_coefficients(self.moments(gamma))
        du = sum(c * s for c, s in zip(coeffs, self.shifted))
        return self.kinetic[None, :] + log_gamma + du


def _normalize_log(log_gamma: np.ndarray, cell: float) -> np.ndarray:
    return log_gamma - (logsumexp(log_gamma, axis=1, keepdims=True) + np.log(cell))


def minimize_single_step(mu: Density, U: FinalCondition, h: float, vcfg: VelocityConfig,
                         spec: PotentialSpec | None = None, t: float = 0.0,
                         tol: float = 1e-10, max_iter: int = 20000, eta: float | None = None) -> OracleResult:
    """Minimize ``action_raw(gamma, mu, h) + U(mu * gamma)`` over row-normalized tables.

    Entropic mirror descent: ``log gamma <- log gamma - eta * grad``, rows
    renormalized, ``eta = h/4`` halved on any increase.  Stops when the
    objective decreased by less than ``tol`` over the last 50 iterations.
    """
    grid = mu.grid
    if grid.p != 1 or grid.size > MAX_ORACLE_NODES:
        raise SizeError(f"oracle needs p = 1 and at most {MAX_ORACLE_NODES} nodes")
    if vcfg.n_v > MAX_ORACLE_NV:
        raise SizeError(f"oracle velocity grid limited to {MAX_ORACLE_NV} nodes")
    if not h > 0:
        raise ConfigurationError("h must be positive")
    v_axis = vcfg.axis()
    obj = _Objective(mu, U, h, v_axis)
    eta = h / 4.0 if eta is None else eta
    log_gamma = _normalize_log(np.zeros((grid.size, v_axis.size)), obj.cell)
    current = RawKernel(grid, v_axis, np.exp(log_gamma))
    value = obj(current)
    trace = [value]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        step = eta
        direction = obj.direction(log_gamma, current.values)
        while True:
            cand_log = _normalize_log(log_gamma - step * direction, obj.cell)
            cand = RawKernel(grid, v_axis, np.exp(cand_log))
            cand_value = obj(cand)
            if cand_value <= value + 1e-14 * max(1.0, abs(value)):
                break
            step *= 0.5
            if step < 1e-12 * eta:
                raise DivergenceError("mirror descent cannot decrease the objective", trace=np.array(trace))
        log_gamma, current, value = cand_log, cand, cand_value
        trace.append(value)
        if it >= WINDOW and trace[-WINDOW - 1] - value < tol:
            converged = True
            break
    potential = 0.0
    if spec is not None:
        pot = eval_V(spec, t, grid).values
        if spec.w_terms:
            pot = pot + 0.5 * mean_field(spec, mu).values
        potential = -h * float(np.sum(pot * mu.values) * grid.cell_volume)
    norm = -0.5 * grid.p * np.log(2.0 * np.pi * h)
    return OracleResult(current, value, value + potential - norm, np.array(trace), it, converged)


def raw_objective(kernel: RawKernel, mu: Density, U: FinalCondition, h: float) -> float:
    """The oracle functional evaluated at an arbitrary table on its own velocity grid."""
    return _Objective(mu, U, h, kernel.v_axis)(kernel)


@dataclass
class ConstrainedMinimum:
    value: float
    variance: float
    iterations: int


def lemma11_numeric(p: int, h: float, eps: float, vcfg: VelocityConfig | None = None,
                    tol: float = 1e-13, max_iter: int = 20000) -> ConstrainedMinimum:
    """Minimal ``int |v|^2/(2h) gamma + gamma log gamma dv`` under unit mass and
    ``int |v|^2/(2h) gamma dv = eps/2``, by mirror descent with a KL projection
    onto both constraints.
    """
    if p != 1:
        raise ConfigurationError("lemma11_numeric supports p = 1 only")
    sigma = np.sqrt(eps * h)
    if vcfg is None:
        v_max = 10.0 * sigma
        n_v = int(np.ceil(2.0 * v_max / (sigma / 16.0))) + 1
        vcfg = VelocityConfig(n_v, v_max)
    if vcfg.dv > sigma / 16.0 * (1 + 1e-12):
        raise ConfigurationError("velocity grid must resolve sqrt(eps h) with 16 nodes per deviation")
    v = vcfg.axis()
    dv = vcfg.dv
    kin = v**2 / (2.0 * h)
    target = eps / 2.0

    def project(log_g):
        # KL projection: exponential tilt by lam * kin, then unit mass
        def moment_gap(lam):
            lg = log_g + lam * kin
            w = np.exp(lg - logsumexp(lg))
            return float(w @ kin) - target
        lo, hi = -1.0, 1.0
        while moment_gap(lo) > 0:
            lo *= 2.0
        while moment_gap(hi) < 0:
            hi *= 2.0
            if hi > 1e6:
                raise NumericalConsistencyError("moment constraint unreachable on this velocity grid")
        lam = brentq(moment_gap, lo, hi, xtol=1e-15, rtol=1e-15)
        lg = log_g + lam * kin
        return lg - (logsumexp(lg) + np.log(dv))

    def objective(log_g):
        g = np.exp(log_g)
        return float(np.sum(kin * g + g * log_g) * dv)

    eta = h / 4.0
    # a Laplace-shaped start keeps the iterates off the Gaussian family until they converge
    log_g = project(-np.abs(v) / sigma)
    value = objective(log_g)
    trace = [value]
    it = 0
    while it < max_iter:
        it += 1
        step = eta
        while True:
            cand = project(log_g - step * (kin + log_g))
            cand_value = objective(cand)
            if cand_value <= value + 1e-15:
                break
            step *= 0.5
            if step < 1e-12 * eta:
                break
        log_g, value = cand, cand_value
        trace.append(value)
        if it >= WINDOW and trace[-WINDOW - 1] - value < tol:
            break
    g = np.exp(log_g)
    mass_err = abs(np.sum(g) * dv - 1.0)
    moment_err = abs(np.sum(kin * g) * dv - target)
    if max(mass_err, moment_err) > 1e-6:
        raise NumericalConsistencyError(f"constraints violated: mass {mass_err:.2e}, moment {moment_err:.2e}")
    # least-squares fit of log gamma = c0 - v^2 / (2 var) over the bulk
    bulk = np.abs(v) <= 4.0 * sigma
    slope = np.polyfit(v[bulk] ** 2, log_g[bulk], 1)[0]
    return ConstrainedMinimum(value, -1.0 / (2.0 * slope), it)


def compare_kernels(raw: RawKernel, other) -> float:
    """Maximum over ``x`` of the ``L^1`` distance between rows.

    ``other`` is a :class:`RawKernel` on the same grids or a :class:`GibbsKernel`,
    which is then tabulated on the velocity grid of ``raw``.
    """
    if isinstance(other, GibbsKernel):
        other = materialize(other, raw.v_axis)
    if other.grid != raw.grid or other.values.shape != raw.values.shape:
        raise ConfigurationError("kernels live on different grids")
    if not np.allclose(other.v_axis, raw.v_axis, rtol=0, atol=1e-14):
        raise ConfigurationError("kernels use different velocity grids")
    return float(np.max(np.sum(np.abs(raw.values - other.values), axis=1) * raw.cell))
