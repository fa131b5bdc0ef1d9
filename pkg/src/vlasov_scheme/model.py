"""Potentials, the mean field and final-condition functionals with exact derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError
from .measures import Density
from .torus_grid import GridField, TorusGrid, check_same_grid, circular_convolve, inner, lipschitz_constant


def _mode(k, p: int) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k, dtype=int))
    if k.size != p:
        raise ConfigurationError(f"mode {tuple(k)} does not match dimension p={p}")
    return k


def _phase(k, points) -> np.ndarray:
    """``2 pi k . x`` for ``points`` of shape ``(..., p)``."""
    return 2.0 * np.pi * np.tensordot(points, k, axes=([-1], [0]))


@dataclass(frozen=True)
class VTerm:
    """``amp * cos(2 pi l t + phase_t) * cos(2 pi k.x + phase_x)``."""

    l: int
    k: tuple
    amp: float
    phase_t: float = 0.0
    phase_x: float = 0.0


@dataclass(frozen=True)
class WTerm:
    """``amp * (cos(2 pi k.x) - 1)``; even and zero at the origin by construction."""

    k: tuple
    amp: float


@dataclass(frozen=True)
class PotentialSpec:
    """External potential ``V(t, x)`` and interaction ``W(x)`` as finite cosine sums."""

    p: int
    v_terms: tuple = ()
    w_terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "v_terms", tuple(
            VTerm(int(t.l), tuple(_mode(t.k, self.p)), float(t.amp), float(t.phase_t), float(t.phase_x))
            for t in (_as_vterm(x) for x in self.v_terms)
        ))
        object.__setattr__(self, "w_terms", tuple(
            WTerm(tuple(_mode(t.k, self.p)), float(t.amp)) for t in (_as_wterm(x) for x in self.w_terms)
        ))

    @property
    def has_interaction(self) -> bool:
        return any(t.amp != 0.0 for t in self.w_terms)

    def v_sup(self) -> float:
        """Upper bound ``sum |a|`` on ``sup |V|``."""
        return float(sum(abs(t.amp) for t in self.v_terms))

    def w_sup(self) -> float:
        """Upper bound ``2 sum |c|`` on ``sup |W|``."""
        return float(2.0 * sum(abs(t.amp) for t in self.w_terms))

    def v_lipschitz(self) -> float:
        """Upper bound on the spatial Lipschitz constant of ``V(t, .)`` uniformly in ``t``."""
        return float(sum(2 * np.pi * np.linalg.norm(t.k) * abs(t.amp) for t in self.v_terms))

    def w_lipschitz(self) -> float:
        return float(sum(2 * np.pi * np.linalg.norm(t.k) * abs(t.amp) for t in self.w_terms))

    def v_at(self, t: float, points) -> np.ndarray:
        """``V(t, x)`` at arbitrary points; ``points`` has a trailing axis of length ``p`` when ``p = 2``."""
        pts = np.asarray(points, dtype=float)
        if self.p == 1:
            pts = pts[..., None]
        out = np.zeros(pts.shape[:-1])
        for term in self.v_terms:
            time_factor = np.cos(2 * np.pi * term.l * t + term.phase_t)
            out = out + term.amp * time_factor * np.cos(_phase(np.array(term.k), pts) + term.phase_x)
        return out

    def w_at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.p == 1:
            pts = pts[..., None]
        out = np.zeros(pts.shape[:-1])
        for term in self.w_terms:
            out = out + term.amp * (np.cos(_phase(np.array(term.k), pts)) - 1.0)
        return out


def _as_vterm(x) -> VTerm:
    return x if isinstance(x, VTerm) else VTerm(*x)


def _as_wterm(x) -> WTerm:
    return x if isinstance(x, WTerm) else WTerm(*x)


def _check_dim(spec: PotentialSpec, grid: TorusGrid):
    if spec.p != grid.p:
        raise ConfigurationError(f"potential has p={spec.p}, grid has p={grid.p}")


def eval_V(spec: PotentialSpec, t: float, grid: TorusGrid) -> GridField:
    _check_dim(spec, grid)
    pts = np.stack(grid.coords(), axis=-1)
    return GridField(grid, spec.v_at(t, pts[..., 0] if grid.p == 1 else pts))


def interaction_field(spec: PotentialSpec, grid: TorusGrid) -> GridField:
    """``W`` sampled at node displacements, usable as a convolution kernel."""
    _check_dim(spec, grid)
    pts = np.stack(grid.coords(), axis=-1)
    return GridField(grid, spec.w_at(pts[..., 0] if grid.p == 1 else pts))


def mean_field(spec: PotentialSpec, mu: Density) -> GridField:
    """``W^mu(x) = int W(x - y) dmu(y)`` by circular convolution."""
    if not spec.w_terms:
        return mu.grid.zeros()
    return circular_convolve(interaction_field(spec, mu.grid), mu)


def total_potential(spec: PotentialSpec, t: float, mu: Density, interaction_weight: float = 1.0) -> GridField:
    """``V(t, .) + w W^mu``; ``w = 1`` drives the kernels, ``w = 1/2`` enters the value."""
    v = eval_V(spec, t, mu.grid)
    if not spec.w_terms or interaction_weight == 0.0:
        return v
    return v + interaction_weight * mean_field(spec, mu)


@dataclass(frozen=True, eq=False)
class FinalCondition:
    """Final cost ``U`` built from linear statistics ``s_i = <f_i, rho>``.

    ``kind`` is ``"linear"`` (``U = s_1``), ``"product"`` (``U = prod s_i``)
    or ``"smooth"`` (``U = Phi(s_1)`` with ``Phi`` a polynomial given by
    ascending coefficients ``phi``).
    """

    kind: str
    fields: tuple
    phi: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("linear", "product", "smooth"):
            raise ConfigurationError(f"unknown final-condition kind {self.kind!r}")
        fields = tuple(self.fields)
        if not fields:
            raise ConfigurationError("final condition needs at least one field")
        if self.kind in ("linear", "smooth") and len(fields) != 1:
            raise ConfigurationError(f"{self.kind} final condition takes exactly one field")
        check_same_grid(*fields)
        if self.kind == "smooth" and not self.phi:
            raise ConfigurationError("smooth final condition needs polynomial coefficients")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "phi", tuple(float(c) for c in self.phi))

    @property
    def grid(self) -> TorusGrid:
        return self.fields[0].grid

    @cached_property
    def _poly(self) -> Polynomial:
        return Polynomial(self.phi)

    def moments(self, rho: Density) -> np.ndarray:
        return np.array([inner(f, rho) for f in self.fields])

    def value_from_moments(self, s) -> float:
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return float(s[0])
        if self.kind == "product":
            return float(np.prod(s))
        return float(self._poly(s[0]))

    def derivative_coefficients(self, s) -> np.ndarray:
        """Weights ``c_i`` with ``U'(rho) = sum c_i f_i``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.ones(1)
        if self.kind == "product":
            return np.array([np.prod(np.delete(s, i)) for i in range(s.size)])
        return np.array([float(self._poly.deriv()(s[0]))])

    def _range(self):
        f = self.fields[0].values
        return float(f.min()), float(f.max())

    def _max_abs_on_range(self, poly: Polynomial) -> float:
        lo, hi = self._range()
        candidates = [lo, hi]
        if poly.degree() >= 1:
            for r in poly.deriv().roots():
                if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                    candidates.append(r.real)
        return float(max(abs(poly(c)) for c in candidates))

    def sup_abs(self) -> float:
        """Upper bound on ``sup_rho |U(rho)|``."""
        norms = [f.sup() for f in self.fields]
        if self.kind == "linear":
            return norms[0]
        if self.kind == "product":
            return float(np.prod(norms))
        return self._max_abs_on_range(self._poly)

    def derivative_bound(self) -> float:
        """``M`` with ``||U'(rho)||_inf <= M`` for every probability density."""
        norms = [f.sup() for f in self.fields]
        if self.kind == "linear":
            return norms[0]
        if self.kind == "product":
            return float(sum(np.prod(np.delete(norms, i)) * norms[i] for i in range(len(norms))))
        return self._max_abs_on_range(self._poly.deriv()) * norms[0]

    def lipschitz(self) -> float:
        """Lipschitz constant of ``U`` for ``d_1`` between grid densities."""
        lips = [lipschitz_constant(f) for f in self.fields]
        norms = [f.sup() for f in self.fields]
        if self.kind == "linear":
            return lips[0]
        if self.kind == "product":
            return float(sum(lips[i] * np.prod(np.delete(norms, i)) for i in range(len(lips))))
        return self._max_abs_on_range(self._poly.deriv()) * lips[0]


def final_value(U: FinalCondition, rho: Density) -> float:
    return U.value_from_moments(U.moments(rho))


def final_derivative(U: FinalCondition, rho: Density) -> GridField:
    coeffs = U.derivative_coefficients(U.moments(rho))
    out = np.zeros(U.grid.shape)
    for c, f in zip(coeffs, U.fields):
        out = out + c * f.values
    return GridField(U.grid, out)


def linear_condition(f: GridField) -> FinalCondition:
    return FinalCondition("linear", (f,))


def product_condition(*fs: GridField) -> FinalCondition:
    return FinalCondition("product", tuple(fs))


def smooth_condition(phi, f: GridField) -> FinalCondition:
    return FinalCondition("smooth", (f,), tuple(phi))
