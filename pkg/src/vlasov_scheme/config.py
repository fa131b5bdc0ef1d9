"""Run configuration: INI-style file, validation, and construction of the model objects.

Sections and keys (unknown ones are rejected)::

    [grid]       p, n_x
    [scheme]     n, s, m, damping, fp_tol, max_iter
    [potential]  v_terms, w_terms
    [final]      kind, f_modes, phi_poly
    [initial]    kind, amp, mode, center, width
    [pde]        nu, dt_factor
    [mc]         paths, seed, algorithm
    [oracle]     n_v, v_max

Term lists are parenthesized tuples, e.g. ``v_terms = (1, 1, 0.1, 0, 0)``.
``v_terms`` tuples are ``(l, k, amp, phase_t, phase_x)`` with ``k`` taking
two entries when ``p = 2``; ``w_terms`` are ``(k, amp)``.  ``f_modes`` lists
``(k, amp, phase)`` cosine modes of one field; several fields (for
``kind = product``) are separated by ``;``.  ``phi_poly`` holds ascending
polynomial coefficients.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .measures import Density, bump_density, cosine_density, uniform_density
from .model import FinalCondition, PotentialSpec
from .scheme import SchemeConfig
from .stochastic import RNG_ALGORITHM
from .torus_grid import GridField, TorusGrid, make_grid

DEFAULTS = {
    "grid": {"p": "1", "n_x": "64"},
    "scheme": {"n": "8", "s": "8", "m": "1", "damping": "0.5", "fp_tol": "1e-8", "max_iter": "200"},
    "potential": {"v_terms": "", "w_terms": ""},
    "final": {"kind": "linear", "f_modes": "(1, 0.1, 0)", "phi_poly": ""},
    "initial": {"kind": "uniform", "amp": "0.5", "mode": "1", "center": "0.5", "width": "0.1"},
    "pde": {"nu": "0.5", "dt_factor": "0.125"},
    "mc": {"paths": "100000", "seed": "7", "algorithm": RNG_ALGORITHM},
    "oracle": {"n_v": "128", "v_max": "0"},
}

_TUPLE = re.compile(r"\(([^()]*)\)")


def _tuples(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    found = _TUPLE.findall(text)
    if not found or _TUPLE.sub("", text).strip(" ,\n\t"):
        raise ConfigurationError(f"cannot parse term list {text!r}")
    try:
        return [tuple(float(x) for x in item.split(",")) for item in found]
    except ValueError as exc:
        raise ConfigurationError(f"non-numeric entry in {text!r}") from exc


@dataclass
class RunConfig:
    """Resolved configuration as a nested mapping of strings."""

    sections: dict

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed configuration: {exc}") from exc
        sections = {name: dict(values) for name, values in DEFAULTS.items()}
        for name in parser.sections():
            if name not in DEFAULTS:
                raise ConfigurationError(f"unknown section [{name}]")
            for key, value in parser.items(name):
                if key not in DEFAULTS[name]:
                    raise ConfigurationError(f"unknown key {key!r} in [{name}]")
                sections[name][key] = value.strip()
        cfg = cls(sections)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def num(self, section: str, key: str, kind=float):
        raw = self.get(section, key)
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a number") from exc
        if kind is int:
            if value != int(value):
                raise ConfigurationError(f"[{section}] {key} must be an integer")
            return int(value)
        return value

    def validate(self):
        self.grid()
        self.scheme()
        self.potential()
        self.final_condition()
        if self.get("mc", "algorithm") != RNG_ALGORITHM:
            raise ConfigurationError(f"only the {RNG_ALGORITHM} generator is supported")
        if self.num("pde", "nu") <= 0:
            raise ConfigurationError("[pde] nu must be positive")

    def resolved(self) -> dict:
        return {name: dict(sorted(values.items())) for name, values in sorted(self.sections.items())}

    def content_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def grid(self) -> TorusGrid:
        return make_grid(self.num("grid", "p", int), self.num("grid", "n_x", int))

    def scheme(self, **overrides) -> SchemeConfig:
        values = dict(
            n=self.num("scheme", "n", int), s=self.num("scheme", "s", int), m=self.num("scheme", "m", int),
            damping=self.num("scheme", "damping"), fp_tol=self.num("scheme", "fp_tol"),
            max_iter=self.num("scheme", "max_iter", int),
        )
        values.update(overrides)
        return SchemeConfig(**values)

    def potential(self) -> PotentialSpec:
        p = self.num("grid", "p", int)
        v_terms = []
        for t in _tuples(self.get("potential", "v_terms")):
            if len(t) != 4 + p:
                raise ConfigurationError(f"v_terms entries need {4 + p} numbers for p={p}")
            v_terms.append((int(t[0]), tuple(int(k) for k in t[1:1 + p]), t[1 + p], t[2 + p], t[3 + p]))
        w_terms = []
        for t in _tuples(self.get("potential", "w_terms")):
            if len(t) != p + 1:
                raise ConfigurationError(f"w_terms entries need {p + 1} numbers for p={p}")
            w_terms.append((tuple(int(k) for k in t[:p]), t[p]))
        return PotentialSpec(p, tuple(v_terms), tuple(w_terms))

    def _field(self, grid: TorusGrid, text: str) -> GridField:
        values = np.zeros(grid.shape)
        coords = grid.coords()
        for t in _tuples(text):
            if len(t) != grid.p + 2:
                raise ConfigurationError(f"f_modes entries need {grid.p + 2} numbers for p={grid.p}")
            phase = sum(2 * np.pi * t[a] * coords[a] for a in range(grid.p)) + t[grid.p + 1]
            values = values + t[grid.p] * np.cos(phase)
        return GridField(grid, values)

    def final_condition(self) -> FinalCondition:
        grid = self.grid()
        groups = [g for g in self.get("final", "f_modes").split(";") if g.strip()]
        fields = tuple(self._field(grid, g) for g in groups)
        phi = tuple(float(x) for x in self.get("final", "phi_poly").replace(",", " ").split())
        return FinalCondition(self.get("final", "kind"), fields, phi)

    def initial_density(self) -> Density:
        grid = self.grid()
        kind = self.get("initial", "kind")
        if kind == "uniform":
            return uniform_density(grid)
        if kind == "cosine":
            return cosine_density(grid, self.num("initial", "amp"), self.num("initial", "mode", int))
        if kind == "bump":
            return bump_density(grid, self.num("initial", "center"), self.num("initial", "width"))
        raise ConfigurationError(f"unknown initial density kind {kind!r}")


DENSITY_SCHEMA = "density.v1"


def write_density(path, mu: Density):
    """One value per line after a two-line header; ``repr`` makes the round trip exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={DENSITY_SCHEMA}\n")
        fh.write(f"# n_x={mu.grid.n_x} p={mu.grid.p}\n")
        for v in mu.values.ravel():
            fh.write(repr(float(v)) + "\n")


def read_density(path) -> Density:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read density {path}: {exc}") from exc
    if len(lines) < 2 or lines[0].strip() != f"# schema={DENSITY_SCHEMA}":
        raise ConfigurationError(f"{path}: missing density schema header")
    meta = dict(item.split("=") for item in lines[1].lstrip("#").split())
    try:
        grid = make_grid(int(meta["p"]), int(meta["n_x"]))
        values = np.array([float(x) for x in lines[2:] if x.strip()])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed density file") from exc
    return Density(grid, values)
