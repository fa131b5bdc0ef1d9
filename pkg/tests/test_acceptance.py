"""Acceptance gate: one test (or parametrized family) per criterion.

Names follow ``test_criterion_NN_<name>``; conftest prints one PASS/FAIL line
per criterion at the end of the run.
"""
import time

import numpy as np
import pytest

from vlasov_scheme.convergence import convergence_study, fitted_slope
from vlasov_scheme.measures import Density, VelocityConfig, cosine_density, wasserstein1
from vlasov_scheme.model import PotentialSpec, linear_condition, product_condition, smooth_condition
from vlasov_scheme.oracle import compare_kernels, lemma11_numeric, minimize_single_step, raw_objective
from vlasov_scheme.scheme import (
    SchemeConfig,
    backward_recursion,
    forward_propagate,
    gaussian_diagnostics,
    semigroup_check,
    solve_fixed_point,
)
from vlasov_scheme.step_kernel import build_kernel, kernel_moments, lemma11_value, materialize, row_masses
from vlasov_scheme.stochastic import feynman_kac
from vlasov_scheme.torus_grid import make_grid, wrapped_gaussian

pytestmark = pytest.mark.acceptance

# instance shared by criteria 7, 8 and 9
SMOOTH_V = PotentialSpec(1, v_terms=[(1, 1, 0.1)])


def smooth_f0(grid):
    return grid.sample(lambda x: 0.1 * np.cos(2 * np.pi * x))


def random_density(rng, grid):
    values = rng.random(grid.shape) ** 2 + 0.01 * rng.random()
    values[rng.random(grid.shape) < 0.2] = 0.0
    values.flat[rng.integers(grid.size)] += 0.1
    return Density.normalized(grid, values)


def random_modes(rng, grid, count=2, scale=1.0):
    values = np.zeros(grid.shape)
    coords = grid.coords()
    for _ in range(count):
        k = rng.integers(-2, 3, size=grid.p)
        phase = sum(2 * np.pi * k[a] * coords[a] for a in range(grid.p)) + rng.uniform(0, 2 * np.pi)
        values += scale * rng.normal() * np.cos(phase)
    return grid.zeros() + values


def random_condition(rng, grid):
    kind = rng.integers(3)
    f1, f2 = random_modes(rng, grid), random_modes(rng, grid, scale=0.5)
    if kind == 0:
        return linear_condition(f1)
    if kind == 1:
        return product_condition(f1, f2)
    return smooth_condition(rng.normal(size=3) * [0.2, 1.0, 0.5], f1)


@pytest.mark.parametrize("h", [0.05, 0.1])
@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_criterion_01_constrained_entropy_minimum(h, eps):
    start = time.perf_counter()
    res = lemma11_numeric(1, h, eps)
    elapsed = time.perf_counter() - start
    assert abs(res.value - lemma11_value(1, h, eps)) <= 1e-4
    assert abs(res.variance / (eps * h) - 1.0) <= 0.01
    assert elapsed < 10.0


def test_criterion_02_one_step_minimizer():
    start = time.perf_counter()
    g = make_grid(1, 16)
    h = 0.25
    vcfg = VelocityConfig(128, 3.0)
    mu = cosine_density(g, 0.5)
    f = g.sample(lambda x: 0.3 * np.cos(2 * np.pi * x) + 0.1 * np.sin(4 * np.pi * x))
    U = linear_condition(f)
    res = minimize_single_step(mu, U, h, vcfg)
    gibbs = build_kernel(f, g.zeros(), 4)
    assert compare_kernels(res.kernel, gibbs) <= 5e-3
    gibbs_objective = raw_objective(materialize(gibbs, vcfg.axis()), mu, U, h)
    assert abs(res.objective - gibbs_objective) <= 1e-6
    assert time.perf_counter() - start < 60.0


def test_criterion_03_potential_independence():
    g = make_grid(1, 16)
    h = 0.25
    vcfg = VelocityConfig(128, 3.0)
    mu = cosine_density(g, 0.5)
    U = linear_condition(g.sample(lambda x: 0.3 * np.cos(2 * np.pi * x) + 0.1 * np.sin(4 * np.pi * x)))
    spec = PotentialSpec(1, v_terms=[(0, 1, 0.3)])
    free = minimize_single_step(mu, U, h, vcfg)
    forced = minimize_single_step(mu, U, h, vcfg, spec=spec)
    assert compare_kernels(free.kernel, forced.kernel) <= 1e-6
    v_integral = float(np.sum(0.3 * np.cos(2 * np.pi * g.axis) * mu.values) * g.dx)
    assert abs((forced.value - free.value) - (-h * v_integral)) <= 1e-8


def test_criterion_04_normalization_invariants():
    rng = np.random.default_rng(4)
    violations = []
    for trial in range(200):
        p = 1 if trial % 4 else 2
        n_x = int(rng.choice([8, 16, 32, 64])) if p == 1 else int(rng.choice([8, 16]))
        g = make_grid(p, n_x)
        n = int(rng.choice([1, 2, 4, 8, 16, 32, 64]))
        G = wrapped_gaussian(g, float(10 ** rng.uniform(-3, 1)))
        if abs(G.mass() - 1.0) > 1e-12:
            violations.append(("gaussian", trial, G.mass()))
        f = random_modes(rng, g, count=3, scale=float(10 ** rng.uniform(-2, 1.5)))
        K = build_kernel(f, random_modes(rng, g), n)
        err = float(np.max(np.abs(row_masses(K) - 1.0)))
        if err > 1e-10:
            violations.append(("row", trial, err))
        for mu in forward_propagate(random_density(rng, g), [K, K]):
            if abs(mu.mass() - 1.0) > 1e-10:
                violations.append(("density", trial, mu.mass()))
    assert violations == []


def test_criterion_05_value_bound():
    rng = np.random.default_rng(5)
    violations = []
    for trial in range(50):
        g = make_grid(1, int(rng.choice([16, 32])))
        n = int(rng.choice([4, 8, 16]))
        s = int(rng.integers(1, n + 1))
        k = int(rng.integers(0, 3))
        spec = PotentialSpec(1, v_terms=[(int(rng.integers(0, 3)), k, float(rng.uniform(-1, 1)),
                                          float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))],
                             w_terms=[(int(rng.integers(1, 3)), float(rng.uniform(-0.3, 0.3)))])
        U = random_condition(rng, g)
        sol = solve_fixed_point(random_density(rng, g), U, spec, SchemeConfig(n, s, m=1))
        bound = 1 * (spec.v_sup() + spec.w_sup()) + U.sup_abs() + 0.05
        if not abs(sol.value.total) <= bound:
            violations.append((trial, sol.value.total, bound))
    assert violations == []


def test_criterion_06_semigroup():
    g = make_grid(1, 32)
    mu = cosine_density(g, 0.5)
    cfg = SchemeConfig(8, 8)
    decoupled = semigroup_check(mu, linear_condition(smooth_f0(g)), SMOOTH_V, cfg, 4, 4)
    assert decoupled <= 1e-10
    spec = PotentialSpec(1, v_terms=[(1, 1, 0.1)], w_terms=[(1, 0.2)])
    U = product_condition(g.sample(lambda x: np.cos(2 * np.pi * x)), g.sample(lambda x: 0.5 + 0.3 * np.sin(2 * np.pi * x)))
    coupled = semigroup_check(mu, U, spec, SchemeConfig(8, 8, fp_tol=1e-10), 4, 4)
    assert coupled <= 1e-6


def test_criterion_07_feynman_kac():
    start = time.perf_counter()
    g = make_grid(1, 16)
    n, s = 8, 8
    f0 = smooth_f0(g)
    sol = solve_fixed_point(cosine_density(g, 0.5), linear_condition(f0), SMOOTH_V, SchemeConfig(n, s))
    target = np.exp(-sol.costs[0].values)
    pots = sol.potentials
    z = []
    for x in range(g.n_x):
        est = feynman_kac(x, -s, n, f0, pots, paths=100_000, rng_seed=7)
        z.append((est.mean - target[x]) / est.stderr)
    assert np.max(np.abs(z)) <= 3.0
    errs = [feynman_kac(0, -s, n, f0, pots, paths=m, rng_seed=7).stderr for m in (1_000, 10_000, 100_000)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:]) / np.sqrt(10.0)
    assert np.all(np.abs(ratios - 1.0) <= 0.2)
    assert time.perf_counter() - start < 120.0


@pytest.fixture(scope="module")
def smooth_study():
    g = make_grid(1, 128)
    start = time.perf_counter()
    rows = convergence_study(cosine_density(g, 0.5), linear_condition(smooth_f0(g)), SMOOTH_V,
                             [8, 16, 32, 64], T=-1.0, probe_times=(-0.5, -0.25), nu=0.5, dt_factor=0.125)
    return rows, time.perf_counter() - start


def test_criterion_08_hj_convergence(smooth_study):
    rows, elapsed = smooth_study
    errs = [r.sup_err_f for r in rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 0.02
    assert elapsed < 300.0


@pytest.mark.parametrize("t", [-0.5, -0.25])
def test_criterion_09_fp_convergence(smooth_study, t):
    rows, _ = smooth_study
    errs = [r.w1_err[t] for r in rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 0.02


def _is_even(values):
    return float(np.max(np.abs(values - np.roll(values[::-1], 1))))


@pytest.mark.parametrize("s", [4, 8, 16])
@pytest.mark.parametrize("kind", ["linear", "product"])
def test_criterion_10_mean_field_coupling(s, kind):
    g = make_grid(1, 64)
    spec = PotentialSpec(1, v_terms=[(1, 1, 0.1)], w_terms=[(1, 0.2)])
    f1 = g.sample(lambda x: 0.3 * np.cos(2 * np.pi * x))
    f2 = g.sample(lambda x: 1.0 + 0.2 * np.cos(4 * np.pi * x))
    U = linear_condition(f1) if kind == "linear" else product_condition(f1, f2)
    mu = cosine_density(g, 0.5)
    worst = []
    sol = solve_fixed_point(mu, U, spec, SchemeConfig(16, s, damping=0.5, fp_tol=1e-8, max_iter=50),
                            on_iterate=lambda it, traj: worst.append(max(_is_even(d.values) for d in traj)))
    assert sol.fp_residual < 1e-8
    assert sol.iterations <= 50
    assert max(worst) <= 1e-10


def test_criterion_11_lipschitz_modulus():
    rng = np.random.default_rng(11)
    g = make_grid(1, 64)
    n = 8
    h = 1.0 / n
    spec = PotentialSpec(1, v_terms=[(1, 1, 0.2, 0.0, 0.1)], w_terms=[(1, 0.15)])
    U = product_condition(g.sample(lambda x: np.cos(2 * np.pi * x)), g.sample(lambda x: 0.5 + 0.3 * np.sin(4 * np.pi * x)))
    modulus = U.lipschitz() + 1.1 * (spec.v_lipschitz() + spec.w_lipschitz()) * h
    cfg = SchemeConfig(n, 1)
    violations = []
    for _ in range(50):
        a, b = random_density(rng, g), random_density(rng, g)
        ga = solve_fixed_point(a, U, spec, cfg).value.total
        gb = solve_fixed_point(b, U, spec, cfg).value.total
        if abs(ga - gb) > modulus * wasserstein1(a, b):
            violations.append((ga, gb, wasserstein1(a, b)))
    assert violations == []


def test_criterion_12_gaussian_diagnostics():
    g = make_grid(1, 64)
    f = g.sample(lambda x: 0.02 * np.cos(2 * np.pi * x))
    ns = [16, 32, 64]
    beta_sup, q_sup, mean_err, cov_err = [], [], [], []
    for n in ns:
        _, kernels = backward_recursion(f, [g.zeros()], n)
        diag = gaussian_diagnostics([f], n)
        beta_sup.append(diag.beta_sup(0))
        q_sup.append(diag.q_dev_sup(0))
        m_err = c_err = 0.0
        for node in range(g.n_x):
            mean, cov = kernel_moments(kernels[0], node)
            m_err = max(m_err, abs(mean[0] - diag.beta[0][0][node]))
            c_err = max(c_err, abs(cov[0, 0] - diag.Q[0][0, 0][node] / n))
        mean_err.append(m_err)
        cov_err.append(c_err)
    assert -1.1 <= fitted_slope(ns, beta_sup) <= -0.9
    assert -1.1 <= fitted_slope(ns, q_sup) <= -0.9
    assert fitted_slope(ns, mean_err) <= -1.5
    assert fitted_slope(ns, cov_err) <= -1.5
