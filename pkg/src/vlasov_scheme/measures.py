"""Probability densities on the grid, Wasserstein-1 distances and the raw entropy-kinetic action."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import logsumexp, xlogy

from .errors import ConfigurationError, NumericalConsistencyError, SizeError, UnsupportedExactError
from .torus_grid import GridField, TorusGrid, TrigInterpolant, check_same_grid, torus_distance

MASS_TOL = 1e-10
ROW_TOL = 1e-8
LP_NODE_CAP = 1024


@dataclass(frozen=True, eq=False)
class Density(GridField):
    """Nonnegative grid field with unit quadrature mass (units mass / volume)."""

    def __post_init__(self):
        super().__post_init__()
        if np.min(self.values) < 0.0:
            raise NumericalConsistencyError(f"density has negative value {np.min(self.values):.3e}")
        drift = abs(self.mass() - 1.0)
        if drift > MASS_TOL:
            raise NumericalConsistencyError(f"density mass off by {drift:.3e}")

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    @classmethod
    def normalized(cls, grid: TorusGrid, values) -> "Density":
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        total = np.sum(values) * grid.cell_volume
        if not total > 0.0:
            raise ConfigurationError("cannot normalize a field with nonpositive mass")
        return cls(grid, values / total)


def uniform_density(grid: TorusGrid) -> Density:
    return Density(grid, np.ones(grid.shape))


def delta_density(grid: TorusGrid, index) -> Density:
    """All mass on one node (height ``1/dx^p``)."""
    values = np.zeros(grid.shape)
    values[np.unravel_index(np.ravel_multi_index(np.atleast_1d(index), grid.shape), grid.shape)] = 1.0
    return Density(grid, values / grid.cell_volume)


def bump_density(grid: TorusGrid, center, width: float) -> Density:
    """Periodized Gaussian bump of standard deviation ``width`` centred at ``center``."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.p,))
    log_vals = np.zeros(grid.shape)
    for axis, c in enumerate(grid.coords()):
        d = torus_distance(c, center[axis])
        images = np.arange(-3, 4)
        log_vals = log_vals + logsumexp(-((d[..., None] + images) ** 2) / (2 * width**2), axis=-1)
    return Density.normalized(grid, np.exp(log_vals - log_vals.max()))


def cosine_density(grid: TorusGrid, amp: float, mode: int = 1) -> Density:
    """``1 + amp cos(2 pi mode x_1)``; requires ``|amp| <= 1``."""
    if abs(amp) > 1.0:
        raise ConfigurationError("cosine density amplitude must satisfy |amp| <= 1")
    x = grid.coords()[0]
    return Density.normalized(grid, 1.0 + amp * np.cos(2 * np.pi * mode * x))


def mixture(a: Density, b: Density, weight: float) -> Density:
    """Convex combination ``weight * a + (1 - weight) * b``."""
    grid = check_same_grid(a.grid, b.grid)
    return Density.normalized(grid, weight * a.values + (1.0 - weight) * b.values)


def wasserstein1(mu: Density, nu: Density) -> float:
    """Exact ``d_1`` on the circle between the node-atom measures of two densities.

    ``min_c sum_i |D_i - c| dx`` with ``D`` the difference of the cumulative
    masses; the optimal rotation ``c`` is a median of ``D``.
    """
    grid = check_same_grid(mu.grid, nu.grid)
    if grid.p != 1:
        raise UnsupportedExactError("exact Wasserstein-1 is implemented for p = 1; use w1_lp_oracle")
    diff = np.cumsum((mu.values - nu.values) * grid.dx)
    c = np.median(diff)
    return float(np.sum(np.abs(diff - c)) * grid.dx)


def w1_lp_oracle(mu: Density, nu: Density, max_nodes: int = LP_NODE_CAP) -> float:
    """Wasserstein-1 by the transport linear program with cost ``|x - y|_{T^p}``.

    Only the signed difference matters for ``d_1``, so mass is moved from the
    positive part of ``mu - nu`` to its negative part.
    """
    grid = check_same_grid(mu.grid, nu.grid)
    if grid.size > max_nodes:
        raise SizeError(f"LP oracle limited to {max_nodes} nodes, grid has {grid.size}")
    diff = (mu.values - nu.values).ravel() * grid.cell_volume
    src = np.flatnonzero(diff > 0)
    dst = np.flatnonzero(diff < 0)
    if src.size == 0 or dst.size == 0:
        return 0.0
    pts = grid.points()
    cost = torus_distance(pts[src][:, None, :], pts[dst][None, :, :], coord_axis=-1)
    n_s, n_d = src.size, dst.size
    rows = np.concatenate([np.repeat(np.arange(n_s), n_d), n_s + np.tile(np.arange(n_d), n_s)])
    cols = np.concatenate([np.arange(n_s * n_d), np.arange(n_s * n_d)])
    a_eq = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_s + n_d, n_s * n_d))
    b_eq = np.concatenate([diff[src], -diff[dst]])
    # both sides carry the same total up to rounding; rebalance the sinks
    b_eq[n_s:] *= b_eq[:n_s].sum() / b_eq[n_s:].sum()
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalConsistencyError(f"transport LP failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class VelocityConfig:
    """Uniform velocity box ``[-v_max, v_max]^p`` with ``n_v`` nodes per axis."""

    n_v: int
    v_max: float

    def axis(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.n_v)

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.n_v - 1)

    @classmethod
    def default(cls, h: float, beta_max: float = 0.0, n_v: int | None = None) -> "VelocityConfig":
        """``v_max = 6 max(sqrt h, beta_max)`` and ``dv <= sqrt(h)/8`` unless ``n_v`` is given."""
        v_max = 6.0 * max(np.sqrt(h), beta_max)
        if n_v is None:
            n_v = int(np.ceil(2.0 * v_max / (np.sqrt(h) / 8.0))) + 1
        return cls(int(n_v), float(v_max))


@dataclass(frozen=True, eq=False)
class RawKernel:
    """Explicit table ``gamma(x_i, v_j)`` on a spatial grid times a velocity box.

    ``values`` has shape ``(grid.size, n_v**p)``; each row integrates to one
    against ``dv^p``.
    """

    grid: TorusGrid
    v_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.grid.size, self.v_axis.size ** self.grid.p)
        if values.shape != expected:
            raise ConfigurationError(f"raw kernel shape {values.shape}, expected {expected}")
        if np.min(values) < 0.0 or not np.all(np.isfinite(values)):
            raise NumericalConsistencyError("raw kernel must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        err = np.max(np.abs(self.row_masses() - 1.0))
        if err > ROW_TOL:
            raise NumericalConsistencyError(f"raw kernel row mass off by {err:.3e}")

    @property
    def dv(self) -> float:
        return float(self.v_axis[1] - self.v_axis[0])

    @property
    def cell(self) -> float:
        return self.dv ** self.grid.p

    def velocity_points(self) -> np.ndarray:
        """Velocity nodes as ``(n_v**p, p)``, C order."""
        mesh = np.meshgrid(*([self.v_axis] * self.grid.p), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def row_masses(self) -> np.ndarray:
        return np.sum(self.values, axis=1) * self.cell

    @classmethod
    def from_log(cls, grid: TorusGrid, v_axis: np.ndarray, log_values: np.ndarray) -> "RawKernel":
        """Row-normalize ``exp(log_values)`` in the log domain."""
        cell = float(v_axis[1] - v_axis[0]) ** grid.p
        log_norm = logsumexp(log_values, axis=1, keepdims=True) + np.log(cell)
        return cls(grid, np.asarray(v_axis, dtype=float), np.exp(log_values - log_norm))


def gaussian_raw_kernel(grid: TorusGrid, vcfg: VelocityConfig, variance: float,
                        normalize: bool = False) -> RawKernel:
    """Rows equal to ``N(0, variance Id)`` sampled on the velocity grid."""
    v = vcfg.axis()
    mesh = np.meshgrid(*([v] * grid.p), indexing="ij")
    sq = sum(m.ravel() ** 2 for m in mesh)
    log_row = -sq / (2 * variance) - 0.5 * grid.p * np.log(2 * np.pi * variance)
    log_values = np.broadcast_to(log_row, (grid.size, sq.size))
    if normalize:
        return RawKernel.from_log(grid, v, log_values)
    return RawKernel(grid, v, np.exp(log_values))


def shifted_samples(field_: GridField, v_points: np.ndarray) -> np.ndarray:
    """Matrix ``g(x_i - v_j)`` by trigonometric interpolation, shape ``(grid.size, n_vel)``."""
    grid = field_.grid
    pts = grid.points()[:, None, :] - v_points[None, :, :]
    interp = TrigInterpolant(field_)
    if grid.p == 1:
        return interp(pts[..., 0])
    return interp(pts)


def push_forward_moments(gamma: RawKernel, mu: Density, fields) -> np.ndarray:
    """``<g, mu * gamma>`` for each field ``g``: ``sum_i mu_i dx^p sum_j g(x_i - v_j) gamma_ij dv^p``."""
    check_same_grid(gamma.grid, mu.grid)
    weights = mu.values.ravel() * mu.grid.cell_volume
    v_points = gamma.velocity_points()
    return np.array([
        float(weights @ np.sum(shifted_samples(g, v_points) * gamma.values, axis=1) * gamma.cell)
        for g in fields
    ])


def action_raw(gamma: RawKernel, mu: Density, h: float) -> float:
    """``int int [|v|^2/(2h) gamma + gamma log gamma] dmu dv`` by grid quadrature (``0 log 0 = 0``)."""
    if not h > 0:
        raise ConfigurationError("step size h must be positive")
    check_same_grid(gamma.grid, mu.grid)
    sq = np.sum(gamma.velocity_points() ** 2, axis=1)
    density = sq[None, :] / (2.0 * h) * gamma.values + xlogy(gamma.values, gamma.values)
    per_x = np.sum(density, axis=1) * gamma.cell
    return float(np.sum(per_x * mu.values.ravel()) * mu.grid.cell_volume)
