import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlasov_scheme.errors import ConfigurationError, GridMismatchError
from vlasov_scheme.torus_grid import (
    GridField,
    TrigInterpolant,
    circular_convolve,
    convolve_values,
    gradient,
    hessian,
    lipschitz_constant,
    log_convolve_exp,
    make_grid,
    quadrature,
    torus_distance,
    wrapped_gaussian,
)

# tests/oracles/frozen.py: wrapped_second_moment(256, 0.01)
WRAPPED_SECOND_MOMENT = 0.0099999786908180348687


def test_make_grid_nodes():
    g = make_grid(1, 8)
    assert np.array_equal(g.axis, np.arange(8) / 8)
    assert make_grid(2, 16).size == 256
    assert g.dx * g.n_x == 1.0


@pytest.mark.parametrize("p, n_x", [(3, 8), (0, 8), (1, 3), (2, 2)])
def test_make_grid_rejects(p, n_x):
    with pytest.raises(ConfigurationError):
        make_grid(p, n_x)


def test_grid_field_validation():
    g = make_grid(1, 8)
    with pytest.raises(GridMismatchError):
        GridField(g, np.zeros(7))
    with pytest.raises(ConfigurationError):
        GridField(g, np.full(8, np.nan))


@pytest.mark.parametrize("p, n_x, var", [(1, 16, 0.05), (1, 64, 1e-3), (2, 16, 0.02), (1, 32, 100.0)])
def test_wrapped_gaussian_mass_symmetry_positivity(p, n_x, var):
    k = wrapped_gaussian(make_grid(p, n_x), var)
    assert abs(k.mass() - 1.0) <= 1e-12
    assert np.all(k.values >= 0)
    flipped = np.roll(np.flip(k.values, axis=tuple(range(p))), 1, axis=tuple(range(p)))
    assert np.array_equal(flipped, k.values)


def test_wrapped_gaussian_second_moment():
    g = make_grid(1, 256)
    k = wrapped_gaussian(g, 0.01)
    moment = float(np.sum(g.offsets**2 * k.values) * g.dx)
    assert 0.0099 <= moment <= 0.0101
    assert moment == pytest.approx(WRAPPED_SECOND_MOMENT, abs=1e-12)


def test_wrapped_gaussian_flat_limit():
    k = wrapped_gaussian(make_grid(1, 32), 100.0)
    assert np.max(np.abs(k.values - 1.0)) <= 1e-10


def test_wrapped_gaussian_rejects_bad_variance():
    with pytest.raises(ConfigurationError):
        wrapped_gaussian(make_grid(1, 8), 0.0)


def test_convolve_delta_reproduces_kernel():
    g = make_grid(1, 32)
    k = wrapped_gaussian(g, 0.01)
    delta = np.zeros(32)
    delta[5] = 1.0 / g.dx
    out = circular_convolve(k, GridField(g, delta)).values
    assert np.allclose(out, np.roll(k.values, 5), atol=1e-12)


@pytest.mark.parametrize("var", [0.01, 0.125, 0.3])
def test_convolve_cosine_eigenfunction(var):
    g = make_grid(1, 64)
    cos = g.sample(lambda x: np.cos(2 * np.pi * x))
    k = wrapped_gaussian(g, var)
    expected = np.exp(-2 * np.pi**2 * var) * cos.values
    for method in ("fft", "direct"):
        out = circular_convolve(k, cos, method=method).values
        assert np.max(np.abs(out - expected)) <= 1e-8


def test_convolve_preserves_constants():
    g = make_grid(2, 16)
    k = wrapped_gaussian(g, 0.03)
    out = circular_convolve(k, g.constant(2.5)).values
    assert np.max(np.abs(out - 2.5)) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 24), st.floats(1e-3, 0.5), st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_fft_and_direct_agree(n_x, var, seed, p):
    if p == 2:
        n_x = min(n_x, 12)
    g = make_grid(p, n_x)
    values = np.random.default_rng(seed).normal(size=g.shape)
    k = wrapped_gaussian(g, var)
    a = convolve_values(k, values, g, "fft")
    b = convolve_values(k, values, g, "direct")
    assert np.max(np.abs(a - b)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 32), st.integers(0, 31), st.integers(0, 2**31 - 1))
def test_convolution_commutes_with_translation(n_x, shift, seed):
    g = make_grid(1, n_x)
    values = np.random.default_rng(seed).normal(size=n_x)
    k = wrapped_gaussian(g, 0.02)
    a = np.roll(convolve_values(k, values, g, "direct"), shift)
    b = convolve_values(k, np.roll(values, shift), g, "direct")
    assert np.array_equal(a, b)


@pytest.mark.parametrize("v1, v2", [(0.01, 0.02), (0.003, 0.05), (0.1, 0.1)])
def test_wrapped_gaussian_semigroup(v1, v2):
    g = make_grid(1, 64)
    k1, k2, k12 = wrapped_gaussian(g, v1), wrapped_gaussian(g, v2), wrapped_gaussian(g, v1 + v2)
    composed = convolve_values(k1, k2.values, g)
    assert np.max(np.abs(composed - k12.values)) <= 1e-8


def test_log_convolve_exp_matches_plain_and_handles_extremes():
    g = make_grid(1, 32)
    k = wrapped_gaussian(g, 0.01)
    f = g.sample(lambda x: 0.3 * np.sin(2 * np.pi * x)).values
    plain = np.log(convolve_values(k, np.exp(f), g))
    assert np.max(np.abs(log_convolve_exp(k, f) - plain)) <= 1e-12
    big = 900.0 * np.cos(2 * np.pi * g.axis)
    out = log_convolve_exp(k, -big)
    assert np.all(np.isfinite(out))
    direct = log_convolve_exp(k, -big, method="direct")
    assert np.max(np.abs(out - direct)) <= 1e-9 * np.max(np.abs(direct))


def test_quadrature_examples():
    g = make_grid(1, 16)
    assert quadrature(g, g.constant(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert abs(quadrature(g, g.sample(lambda x: np.cos(2 * np.pi * x)))) <= 1e-14
    delta = np.zeros(16)
    delta[3] = 1 / g.dx
    assert quadrature(g, GridField(g, delta)) == pytest.approx(1.0, abs=1e-15)


def test_trig_interpolant_exact_for_band_limited():
    g = make_grid(1, 16)
    f = g.sample(lambda x: 0.3 * np.cos(2 * np.pi * x) - 0.2 * np.sin(6 * np.pi * x + 0.4))
    pts = np.linspace(-1.3, 2.1, 57)
    exact = 0.3 * np.cos(2 * np.pi * pts) - 0.2 * np.sin(6 * np.pi * pts + 0.4)
    assert np.max(np.abs(TrigInterpolant(f)(pts) - exact)) <= 1e-13
    g2 = make_grid(2, 8)
    h = g2.sample(lambda x, y: np.cos(2 * np.pi * (x + 2 * y)))
    p2 = np.array([[0.13, 0.71], [0.9, -0.25]])
    assert np.allclose(TrigInterpolant(h)(p2), np.cos(2 * np.pi * (p2[:, 0] + 2 * p2[:, 1])), atol=1e-13)


def test_derivatives_converge():
    g = make_grid(2, 64)
    f = g.sample(lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
    x, y = g.coords()
    grad = gradient(f)
    assert np.max(np.abs(grad[0] - 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y))) < 0.02
    hess = hessian(f)
    mixed = -4 * np.pi**2 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
    assert np.max(np.abs(hess[0, 1] - mixed)) < 0.005 * 4 * np.pi**2
    assert np.array_equal(hess[0, 1], hess[1, 0])


def test_torus_distance_and_lipschitz():
    assert torus_distance(0.1, 0.9) == pytest.approx(0.2)
    assert torus_distance(np.array([0.1, 0.1]), np.array([0.9, 0.8]), coord_axis=-1) == pytest.approx(np.hypot(0.2, 0.3))
    g = make_grid(1, 256)
    f = g.sample(lambda x: np.sin(2 * np.pi * x))
    assert lipschitz_constant(f) == pytest.approx(2 * np.pi, rel=1e-3)
    g2 = make_grid(2, 16)
    h = g2.sample(lambda x, y: np.cos(2 * np.pi * x))
    assert lipschitz_constant(h) <= 2 * np.pi + 1e-12
