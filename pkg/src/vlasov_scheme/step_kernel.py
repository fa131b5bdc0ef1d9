"""One backward time step: the Gibbs kernel, its push-forward and the per-step cost.

A kernel of step ``1/n`` lives in factored form::

    gamma(x, v) = N(0, Id/n)(v) * exp(-f(x - v) + b(x)),   b = -log(G_{1/n} * e^{-f})

so every integral against it reduces to a circular convolution with the
wrapped Gaussian ``G_{1/n}``.  A particle at ``x`` moves to ``x - v``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalConsistencyError
from .measures import Density, RawKernel
from .model import PotentialSpec, mean_field, eval_V
from .torus_grid import (
    GridField,
    TrigInterpolant,
    WrappedGaussian,
    check_same_grid,
    convolve_values,
    log_convolve_exp,
    wrapped_gaussian,
)

logger = logging.getLogger(__name__)

PUSH_MASS_TOL = 1e-8


def lemma11_value(p: int, h: float, eps: float) -> float:
    """Minimal entropy-kinetic action among laws with ``int |v|^2/(2h) gamma = p eps / 2``."""
    if not (h > 0 and eps > 0):
        raise ConfigurationError("h and eps must be positive")
    return p * eps / 2.0 - 0.5 * p * np.log(2.0 * np.pi * eps * h) - p / 2.0


def gaussian_normalization(p: int, n: int) -> float:
    """Per-step normalization ``(p/2) log(n / 2 pi)`` removed from the value."""
    return 0.5 * p * np.log(n / (2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class GibbsKernel:
    """Transition law of one step of length ``1/n``.

    Attributes
    ----------
    f : GridField
        Cost at the arrival time.
    b : GridField
        Row normalizer, ``-log(G_{1/n} * e^{-f})``.
    n : int
        Steps per unit time; the Gaussian factor has variance ``1/n``.
    P : GridField
        Full-weight potential charged at the departure time.
    f_prev : GridField
        Cost at the departure time, ``b - P/n``.
    """

    f: GridField
    b: GridField
    n: int
    P: GridField
    f_prev: GridField
    gaussian: WrappedGaussian = field(repr=False)

    @property
    def grid(self):
        return self.f.grid

    @property
    def variance(self) -> float:
        return 1.0 / self.n


def build_kernel(f: GridField, P: GridField, n: int, gaussian: WrappedGaussian | None = None) -> GibbsKernel:
    """Gibbs kernel for arrival cost ``f`` and departure potential ``P``.

    The convolution is carried out in the log domain, so arbitrarily large
    ``|f|`` never overflows.
    """
    grid = check_same_grid(f.grid, P.grid)
    if int(n) != n or n < 1:
        raise ConfigurationError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if gaussian is None:
        gaussian = wrapped_gaussian(grid, 1.0 / n)
    log_i = log_convolve_exp(gaussian, -f.values)
    if not np.all(np.isfinite(log_i)):
        raise NumericalConsistencyError("non-finite normalizer in kernel construction")
    b = GridField(grid, -log_i)
    f_prev = GridField(grid, -log_i - P.values / n)
    return GibbsKernel(f, b, n, P, f_prev, gaussian)


def row_masses(K: GibbsKernel) -> np.ndarray:
    """``int gamma(x, v) dv`` per node, recomputed by direct summation."""
    log_i = log_convolve_exp(K.gaussian, -K.f.values, method="direct")
    return np.exp(K.b.values + log_i)


def push_forward(mu: Density, K: GibbsKernel) -> Density:
    """Density of ``mu * gamma``: ``e^{-f(z)} (G * (e^{b} mu))(z)``."""
    grid = check_same_grid(mu.grid, K.grid)
    with np.errstate(divide="ignore"):
        log_src = K.b.values + np.log(mu.values)
    log_out = -K.f.values + log_convolve_exp(K.gaussian, log_src)
    out = np.exp(log_out)
    mass = float(np.sum(out) * grid.cell_volume)
    if abs(mass - 1.0) > PUSH_MASS_TOL:
        raise NumericalConsistencyError(f"push-forward mass drift {mass - 1.0:.3e}")
    return Density(grid, out / mass)


def kernel_average(K: GibbsKernel, g: GridField) -> GridField:
    """``(K g)(x) = int g(x - v) gamma(x, v) dv``."""
    grid = check_same_grid(K.grid, g.grid)
    shift = np.min(K.f.values)
    w = np.exp(-(K.f.values - shift))
    num = convolve_values(K.gaussian, g.values * w, grid)
    den = convolve_values(K.gaussian, w, grid)
    return GridField(grid, num / den)


def expected_cost(K: GibbsKernel) -> GridField:
    """``int f(x - v) gamma(x, v) dv`` computed with log-domain convolutions."""
    grid = K.grid
    f = K.f.values
    shift = np.min(f)
    d = f - shift
    with np.errstate(divide="ignore"):
        log_num = log_convolve_exp(K.gaussian, np.log(d) - d) if np.any(d > 0) else None
    log_den = log_convolve_exp(K.gaussian, -d)
    if log_num is None:
        return GridField(grid, np.full(grid.shape, shift))
    return GridField(grid, shift + np.exp(log_num - log_den))


def kinetic_term(mu: Density, K: GibbsKernel) -> float:
    """Entropy-kinetic action of the kernel net of the Gaussian normalization.

    Equals ``int (b - K<f>) dmu``, the mean relative entropy of the rows with
    respect to ``N(0, Id/n)``; nonnegative.
    """
    check_same_grid(mu.grid, K.grid)
    per_x = K.b.values - expected_cost(K).values
    return float(np.sum(per_x * mu.values) * mu.grid.cell_volume)


def potential_term(mu: Density, t: float, spec: PotentialSpec, n: int) -> float:
    """``-(1/n) int (V(t) + W^mu / 2) dmu``."""
    pot = eval_V(spec, t, mu.grid).values
    if spec.w_terms:
        pot = pot + 0.5 * mean_field(spec, mu).values
    return float(-np.sum(pot * mu.values) * mu.grid.cell_volume / n)


def step_cost(mu: Density, K: GibbsKernel, t: float, spec: PotentialSpec) -> float:
    """Running cost of one step from ``mu`` at time ``t``, net of normalization."""
    return kinetic_term(mu, K) + potential_term(mu, t, spec, K.n)


def materialize(K: GibbsKernel, v_axis: np.ndarray) -> RawKernel:
    """Table of the kernel on a velocity box, rows renormalized on that box.

    ``f`` is evaluated off-grid by trigonometric interpolation.
    """
    grid = K.grid
    v_axis = np.asarray(v_axis, dtype=float)
    mesh = np.meshgrid(*([v_axis] * grid.p), indexing="ij")
    v_pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shifted = grid.points()[:, None, :] - v_pts[None, :, :]
    interp = TrigInterpolant(K.f)
    f_shift = interp(shifted[..., 0]) if grid.p == 1 else interp(shifted)
    log_vals = -0.5 * K.n * np.sum(v_pts**2, axis=1)[None, :] - f_shift
    return RawKernel.from_log(grid, v_axis, log_vals)


def _lattice_velocities(K: GibbsKernel, radius: float):
    """Velocity lattice ``v = j dx`` with ``|v_i| <= radius`` and node indices of ``x - v``."""
    grid = K.grid
    j_max = int(np.ceil(radius / grid.dx))
    j = np.arange(-j_max, j_max + 1)
    mesh = np.meshgrid(*([j] * grid.p), indexing="ij")
    steps = np.stack([m.ravel() for m in mesh], axis=-1)
    return steps * grid.dx, steps


def kernel_row(K: GibbsKernel, x, radius: float | None = None):
    """Row ``gamma(x, .)`` on the unwrapped velocity lattice, normalized on it.

    Returns ``(velocities, weights)`` with ``velocities`` of shape ``(m, p)``
    and ``weights`` summing to one.
    """
    grid = K.grid
    sigma = np.sqrt(K.variance)
    if radius is None:
        radius = 12.0 * sigma + 1.0
    v, steps = _lattice_velocities(K, radius)
    idx = np.atleast_1d(np.asarray(x, dtype=int))
    target = tuple((idx[a] - steps[:, a]) % grid.n_x for a in range(grid.p))
    log_w = -0.5 * K.n * np.sum(v**2, axis=1) - K.f.values[target]
    log_w -= np.max(log_w)
    w = np.exp(log_w)
    return v, w / np.sum(w)


def kernel_moments(K: GibbsKernel, x):
    """Mean and covariance of row ``gamma(x, .)`` over the unwrapped velocity lattice."""
    v, w = kernel_row(K, x)
    mean = w @ v
    centred = v - mean
    cov = (centred * w[:, None]).T @ centred
    return mean, cov


def kernel_extremes(K: GibbsKernel):
    """Largest kernel value and smallest value on the ball ``|v| <= 2 sqrt(p)``."""
    grid = K.grid
    sigma = np.sqrt(K.variance)
    radius = max(2.0 * np.sqrt(grid.p), 10.0 * sigma)
    v, steps = _lattice_velocities(K, radius)
    sq = np.sum(v**2, axis=1)
    log_gauss = -0.5 * K.n * sq - 0.5 * grid.p * np.log(2 * np.pi * K.variance)
    in_ball = np.sqrt(sq) <= 2.0 * np.sqrt(grid.p)
    top, bottom = -np.inf, np.inf
    for idx in np.ndindex(*grid.shape):
        target = tuple((idx[a] - steps[:, a]) % grid.n_x for a in range(grid.p))
        log_g = log_gauss - K.f.values[target] + K.b.values[idx]
        top = max(top, float(np.max(log_g)))
        bottom = min(bottom, float(np.min(log_g[in_ball])))
    return float(np.exp(top)), float(np.exp(bottom))


def generator_residual(K: GibbsKernel, g: GridField) -> GridField:
    """``n [(K g) - g]``, the discrete generator applied to ``g``."""
    return GridField(g.grid, K.n * (kernel_average(K, g).values - g.values))
