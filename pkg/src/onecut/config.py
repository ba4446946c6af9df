"""Experiment configuration: a flat text file of dotted keys with JSON values.

    # example
    potential.coeffs = [0.0, 0.0, 0.5]
    phi.coeffs = [0.0, 1.0]
    beta = 1
    n = 32
    clt.n_ladder = [16, 32, 64]

Unknown keys are rejected with line diagnostics; every run writes the fully
resolved configuration next to its results.  Environment overrides are limited
to ONECUT_OUT (output directory) and ONECUT_THREADS (thread count).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .potential import Potential, TestFunction, perturb
from .quadrature import QuadSpec


class ConfigError(ValueError):
    pass


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number_list(v) -> bool:
    return isinstance(v, list) and all(_is_number(x) for x in v)


def _int_like(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


SCHEMA = {
    "potential.coeffs": (_number_list, [0.0, 0.0, 0.5]),
    "potential.d": (_is_number, 1.0),
    "potential.d1": (_is_number, 1.0),
    "phi.coeffs": (_number_list, [0.0, 1.0]),
    "t": (_is_number, 0.0),
    "t_list": (_number_list, [0.0]),
    "n": (_int_like, 32),
    "beta": (lambda v: v in (1, 2), 1),
    "quadrature.panels": (_int_like, 64),
    "quadrature.nodes": (_int_like, 24),
    "precision.digits": (_int_like, 40),
    "sampler.chains": (_int_like, 4),
    "sampler.sweeps": (_int_like, 3000),
    "sampler.burnin": (_int_like, 500),
    "sampler.thin": (_int_like, 1),
    "sampler.step_size": (_is_number, 0.5),
    "seed": (_int_like, 0),
    "threads": (_int_like, 0),            # 0: use available cores
    "output.dir": (lambda v: isinstance(v, str), "out"),
    "clt.n_ladder": (lambda v: isinstance(v, list) and all(_int_like(x) for x in v), None),
    "clt.phis": (lambda v: isinstance(v, list) and all(_number_list(x) for x in v), None),
    "kernels.n_list": (lambda v: isinstance(v, list) and all(_int_like(x) for x in v), None),
}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            parsed = json.loads(val.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        check, _default = SCHEMA[key]
        if not check(parsed):
            raise ConfigError(f"line {lineno}: value {parsed!r} invalid for {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parsed
    return out


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config_text(text))

    def resolved(self) -> dict:
        """Full key set with defaults applied (None-default keys derived)."""
        out = {}
        for key, (_check, default) in SCHEMA.items():
            out[key] = self.values.get(key, default)
        if out["clt.n_ladder"] is None:
            out["clt.n_ladder"] = [out["n"]]
        if out["clt.phis"] is None:
            out["clt.phis"] = [out["phi.coeffs"]]
        if out["kernels.n_list"] is None:
            out["kernels.n_list"] = [out["n"]]
        out["output.dir"] = os.environ.get("ONECUT_OUT", out["output.dir"])
        env_threads = os.environ.get("ONECUT_THREADS")
        if env_threads is not None:
            try:
                out["threads"] = int(env_threads)
            except ValueError as exc:
                raise ConfigError(f"ONECUT_THREADS={env_threads!r} is not an int") from exc
        if out["threads"] == 0:
            out["threads"] = os.cpu_count() or 1
        return out

    def potential(self) -> Potential:
        r = self.resolved()
        pot = Potential(tuple(r["potential.coeffs"]), d=r["potential.d"],
                        d1=r["potential.d1"])
        if r["t"] != 0.0:
            pot = perturb(pot, self.phi(), r["t"], r["n"])
        return pot

    def phi(self) -> TestFunction:
        return TestFunction(tuple(self.resolved()["phi.coeffs"]))

    def quad(self) -> QuadSpec:
        r = self.resolved()
        return QuadSpec(r["quadrature.panels"], r["quadrature.nodes"])


def write_resolved(resolved: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {json.dumps(v)}" for k, v in sorted(resolved.items())]
    path.write_text("\n".join(lines) + "\n")
    return path
