"""Command-line runner: ``vlasov-scheme <command> --config FILE [options]``.

Exit status: 0 success, 2 configuration error, 3 numerical-consistency
error, 4 non-convergence of the fixed point when ``--strict`` is given.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, read_density
from .convergence import convergence_study
from .errors import (
    ConfigurationError,
    GridMismatchError,
    NumericalConsistencyError,
    SchemeError,
    SizeError,
    UnsupportedExactError,
)
from .measures import VelocityConfig, w1_lp_oracle, wasserstein1
from .model import final_derivative
from .oracle import compare_kernels, minimize_single_step, raw_objective
from .scheme import (
    gaussian_diagnostics,
    replay_residuals,
    semigroup_check,
    solve_fixed_point,
)
from .step_kernel import kernel_extremes, materialize, row_masses
from .stochastic import RNG_ALGORITHM, feynman_kac

logger = logging.getLogger("vlasov_scheme")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NOT_CONVERGED = 4


class NotConverged(Exception):
    pass


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma-separated integer list, got {text!r}") from exc


def _report(cfg: RunConfig, command: str, payload: dict) -> dict:
    return {"command": command, "version": __version__, "config": cfg.resolved(),
            "config_sha256": cfg.content_hash(), "result": payload}


def _emit_json(args, name: str, report: dict):
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _emit_csv(args, name: str, schema: str, header: list, rows: list, cfg: RunConfig):
    buf = io.StringIO()
    buf.write(f"# schema={schema} config_sha256={cfg.content_hash()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _density(args, cfg: RunConfig):
    if getattr(args, "density", None):
        mu = read_density(args.density)
        if mu.grid != cfg.grid():
            raise ConfigurationError("density file grid differs from the configured grid")
        return mu
    return cfg.initial_density()


def _check_converged(args, sol, cfg):
    if args.strict and sol.fp_residual >= cfg.scheme().fp_tol:
        raise NotConverged(f"fixed point residual {sol.fp_residual:.3e} after {sol.iterations} iterations")


def cmd_step(args, cfg: RunConfig):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    scfg = cfg.scheme(s=1)
    sol = solve_fixed_point(mu, U, spec, scfg)
    K = sol.kernels[0]
    top, bottom = kernel_extremes(K)
    payload = {
        "value": sol.value.as_dict(),
        "fp_iterations": sol.iterations,
        "fp_residual": sol.fp_residual,
        "row_mass_error": float(np.max(np.abs(row_masses(K) - 1.0))),
        "kernel_max": top,
        "kernel_min_ball": bottom,
        "push_forward_min": float(sol.densities[1].values.min()),
    }
    _emit_json(args, "step", _report(cfg, "step", payload))
    _check_converged(args, sol, cfg)


def _solve(args, cfg):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    return solve_fixed_point(mu, U, spec, cfg.scheme()), U, spec


def cmd_solve(args, cfg: RunConfig):
    sol, U, spec = _solve(args, cfg)
    diag = gaussian_diagnostics(sol.costs, sol.n)
    payload = {
        "fp_iterations": sol.iterations,
        "fp_residual": sol.fp_residual,
        "fp_history": sol.history,
        "value": sol.value.as_dict(),
        "replay": replay_residuals(sol),
        "times": sol.times.tolist(),
        "masses": [d.mass() for d in sol.densities],
        "cost_sup": [c.sup() for c in sol.costs],
        "gaussian_constant": diag.constant,
    }
    _emit_json(args, "solve", _report(cfg, "solve", payload))
    _check_converged(args, sol, cfg)


def cmd_value(args, cfg: RunConfig):
    sol, U, spec = _solve(args, cfg)
    payload = {"value": sol.value.as_dict(), "fp_iterations": sol.iterations, "fp_residual": sol.fp_residual}
    _emit_json(args, "value", _report(cfg, "value", payload))
    _check_converged(args, sol, cfg)


def cmd_converge(args, cfg: RunConfig):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    base = cfg.scheme()
    horizon = -base.s / base.n
    rows = convergence_study(
        mu, U, spec, _ints(args.n), T=horizon, probe_times=(horizon / 2, horizon / 4),
        nu=cfg.num("pde", "nu"), dt_factor=cfg.num("pde", "dt_factor"),
        damping=base.damping, fp_tol=base.fp_tol, max_iter=base.max_iter,
    )
    header = ["n", "sup_err_f", "w1_err_mu_final", f"w1_err_t{horizon / 2:g}", f"w1_err_t{horizon / 4:g}",
              "value", "value_ref", "fp_iters", "wall_ms"]
    table = [[r.n, repr(r.sup_err_f), repr(r.w1_err[0.0]), repr(r.w1_err[horizon / 2]),
              repr(r.w1_err[horizon / 4]), repr(r.value), repr(r.value_ref), r.fp_iters, f"{r.wall_ms:.1f}"]
             for r in rows]
    _emit_csv(args, "converge", "converge.v1", header, table, cfg)
    if args.strict and any(r.fp_residual >= base.fp_tol for r in rows):
        raise NotConverged("fixed point not converged for some n")


def cmd_fk(args, cfg: RunConfig):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    sol = solve_fixed_point(mu, U, spec, cfg.scheme())
    paths = args.paths if args.paths is not None else cfg.num("mc", "paths", int)
    seed = args.seed if args.seed is not None else cfg.num("mc", "seed", int)
    grid = mu.grid
    nodes = _ints(args.nodes) if args.nodes else list(range(grid.n_x))
    f0 = final_derivative(U, sol.densities[-1])
    j = -sol.s
    entries = []
    for x in nodes:
        if not 0 <= x < grid.n_x:
            raise ConfigurationError(f"node {x} outside the grid")
        est = feynman_kac(x, j, sol.n, f0, sol.potentials, paths, seed)
        exact = float(np.exp(-sol.costs[0].values[x]))
        entries.append({"node": x, "mc": est.mean, "stderr": est.stderr, "recursion": exact,
                        "z": (est.mean - exact) / est.stderr if est.stderr > 0 else 0.0})
    payload = {"rng": RNG_ALGORITHM, "seed": seed, "paths": paths, "start_index": j,
               "max_abs_z": max(abs(e["z"]) for e in entries), "nodes": entries}
    _emit_json(args, "fk", _report(cfg, "fk", payload))


def cmd_oracle(args, cfg: RunConfig):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    scfg = cfg.scheme(s=1)
    h = scfg.h
    v_max = cfg.num("oracle", "v_max") or 6.0 * np.sqrt(h)
    vcfg = VelocityConfig(cfg.num("oracle", "n_v", int), v_max)
    res = minimize_single_step(mu, U, h, vcfg, spec, t=-h)
    sol = solve_fixed_point(mu, U, spec, scfg)
    gibbs = materialize(sol.kernels[0], vcfg.axis())
    payload = {
        "row_l1_error": compare_kernels(res.kernel, sol.kernels[0]),
        "objective_oracle": res.objective,
        "objective_gibbs": raw_objective(gibbs, mu, U, h),
        "value_oracle": res.value,
        "value_scheme": sol.value.total,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    _emit_json(args, "oracle", _report(cfg, "oracle", payload))


def cmd_w1(args, cfg: RunConfig):
    a, b = read_density(args.a), read_density(args.b)
    payload = {}
    if a.grid.p == 1:
        payload["w1"] = wasserstein1(a, b)
    if a.grid.size <= 1024:
        payload["w1_lp"] = w1_lp_oracle(a, b)
    _emit_json(args, "w1", _report(cfg, "w1", payload))


def cmd_semigroup(args, cfg: RunConfig):
    mu = _density(args, cfg)
    U, spec = cfg.final_condition(), cfg.potential()
    scfg = cfg.scheme()
    s1 = args.split if args.split is not None else scfg.s // 2
    residual = semigroup_check(mu, U, spec, scfg, s1, scfg.s - s1)
    _emit_json(args, "semigroup", _report(cfg, "semigroup", {"s1": s1, "s2": scfg.s - s1, "residual": residual}))


COMMANDS = {
    "step": cmd_step, "solve": cmd_solve, "value": cmd_value, "converge": cmd_converge,
    "fk": cmd_fk, "oracle": cmd_oracle, "w1": cmd_w1, "semigroup": cmd_semigroup,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlasov-scheme", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="configuration file (defaults apply when omitted)")
        p.add_argument("--out", help="directory for report files")
        p.add_argument("--strict", action="store_true", help="exit 4 when the fixed point does not converge")
        p.add_argument("--verbose", action="store_true")
        if name not in ("w1",):
            p.add_argument("--density", help="initial density file overriding [initial]")
    sub.choices["converge"].add_argument("--n", default="8,16,32,64", help="comma-separated list of n")
    sub.choices["fk"].add_argument("--paths", type=int)
    sub.choices["fk"].add_argument("--seed", type=int)
    sub.choices["fk"].add_argument("--nodes", help="comma-separated node indices (default: all)")
    sub.choices["w1"].add_argument("a")
    sub.choices["w1"].add_argument("b")
    sub.choices["semigroup"].add_argument("--split", type=int, help="steps s1 nearest the final time")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_text("")
        COMMANDS[args.command](args, cfg)
    except (ConfigurationError, GridMismatchError, SizeError, UnsupportedExactError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (NumericalConsistencyError, SchemeError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


run = main

if __name__ == "__main__":
    sys.exit(main())
