"""Feynman-Kac Monte Carlo for ``exp(-f_j)`` along Brownian bridges.

A path started at ``x`` at time ``j/n`` and ending at ``z`` at time 0 is
written ``X(t) = x - a_{x-z}(t) - w(t)`` where ``a_y`` is the straight line
from 0 to ``y`` and ``w`` a Brownian bridge pinned at both ends.  With
``z ~ N(x, |j|/n)`` the estimator is the average of

    exp(-f0(z)) * exp((1/n) sum_{r=j}^{-1} P_r(X(r/n))).

Random numbers come from PCG64 streams keyed by ``(seed, node, block)``, so a
result does not depend on how nodes or blocks are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .torus_grid import GridField, TrigInterpolant

RNG_ALGORITHM = "PCG64"
BLOCK = 4096


@dataclass(frozen=True)
class BridgePath:
    """Bridge values at times ``j/n, ..., 0``; ``values`` has shape ``(|j| + 1, paths)``."""

    times: np.ndarray
    values: np.ndarray


def _rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def _bridge(j: int, n: int, rng: np.random.Generator, paths: int) -> BridgePath:
    times = np.arange(j, 1) / n
    values = np.zeros((times.size, paths))
    for k in range(times.size - 2):
        t0, t1 = times[k], times[k + 1]
        ratio = t1 / t0  # (0 - t1) / (0 - t0)
        mean = values[k] * ratio
        var = (t1 - t0) * ratio
        values[k + 1] = mean + np.sqrt(var) * rng.standard_normal(paths)
    return BridgePath(times, values)


def sample_bridge(j: int, n: int, rng_seed: int, paths: int = 1) -> BridgePath:
    """Brownian bridge on ``[j/n, 0]`` pinned to 0 at both ends, by sequential conditioning."""
    if j > -1:
        raise ConfigurationError("bridge start index must be <= -1")
    return _bridge(j, n, _rng(rng_seed), paths)


def _evaluate(interp: TrigInterpolant, x: np.ndarray) -> np.ndarray:
    return interp(np.mod(x, 1.0))


@dataclass(frozen=True)
class FKEstimate:
    mean: float
    stderr: float
    paths: int


def feynman_kac(x: int, j: int, n: int, f0: GridField, potentials, paths: int, rng_seed: int) -> FKEstimate:
    """Monte Carlo estimate of ``exp(-f_j(x_node))``.

    ``potentials`` is the list used by the backward recursion: entry ``i``
    is the potential at time ``(-s + i)/n`` with ``s = len(potentials)``.
    Only ``p = 1`` is supported.
    """
    grid = f0.grid
    if grid.p != 1:
        raise ConfigurationError("Feynman-Kac sampling supports p = 1")
    s = len(potentials)
    if not -s <= j <= -1:
        raise ConfigurationError(f"start index {j} outside [-{s}, -1]")
    if paths < 2:
        raise ConfigurationError("need at least two paths for a standard error")
    x0 = grid.axis[x]
    span = -j / n
    f_interp = TrigInterpolant(f0)
    p_interp = [TrigInterpolant(potentials[s + r]) for r in range(j, 0)]
    samples = []
    for block, start in enumerate(range(0, paths, BLOCK)):
        m = min(BLOCK, paths - start)
        rng = _rng(rng_seed, x, block)
        z = x0 + np.sqrt(span) * rng.standard_normal(m)
        bridge = _bridge(j, n, rng, m)
        log_weight = np.zeros(m)
        for k, r in enumerate(range(j, 0)):
            frac = (r - j) / (-j)  # a_y(r/n) = frac * y
            pos = x0 - frac * (x0 - z) - bridge.values[k]
            log_weight += _evaluate(p_interp[k], pos) / n
        samples.append(np.exp(-_evaluate(f_interp, z) + log_weight))
    values = np.concatenate(samples)
    mean = math.fsum(values) / values.size
    var = math.fsum((values - mean) ** 2) / (values.size - 1)
    return FKEstimate(mean, math.sqrt(var / values.size), values.size)
