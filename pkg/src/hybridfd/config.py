"""Experiment configuration files.

A config is a TOML file (or JSON with the same structure).  Keys may be
written as dotted names or as tables::

    experiment = "helmholtz-test2"
    output = "out/test2"
    kernel.variant = "hybrid"
    kernel.epsilon = 1.0
    kernel.gamma = 1e-3
    nodes.layout = "cartesian"
    nodes.nx = 20
    nodes.nz = 20
    stencil.n = 10
    problem.k = 9.0

Relative paths (``output``, ``nodes.file``) are resolved against the
directory of the config file.  See ``configs/README.md`` for every key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from .helmholtz import TEST1_NAMES
from .kernels import KernelSpec

EXPERIMENTS = (
    "derive-test1",
    "helmholtz-test2",
    "eigen-spectra",
    "epsilon-gamma-map",
    "converge",
    "timing",
    "acoustic-dirac",
    "acoustic-freqs",
    "acoustic-halton",
    "acoustic-time",
)

NUM = (int, float)
LIST = (list,)

# section -> key -> accepted types
SCHEMA = {
    "kernel": {"variant": (str,), "epsilon": NUM, "gamma": NUM, "m": (int,)},
    "nodes": {
        "layout": (str,),
        "nx": (int,),
        "nz": (int,),
        "N": (int,),
        "seed": (int,),
        "start": (int,),
        "boundary_ring": (int,),
        "domain": LIST,
        "file": (str,),
    },
    "stencil": {"n": (int,), "poly_degree": (int,)},
    "problem": {
        "k": NUM,
        "Ns": LIST,
        "settings": LIST,
        "ns": LIST,
        "baseline_gamma": NUM,
        "epsilons": LIST,
        "gammas": LIST,
        "kernels": LIST,
        "repeats": (int,),
        "frequency": NUM,
        "frequencies": LIST,
        "c": NUM,
        "source": LIST,
        "source_kind": (str,),
        "fc": NUM,
        "f0": NUM,
        "f_max": NUM,
        "df": NUM,
        "receivers": LIST,
        "dt": NUM,
        "T": NUM,
        "length_scale": NUM,
        "strict": (bool,),
        "boundaries": LIST,
        "halton_N": (int,),
    },
}
TOP = {"experiment": (str,), "output": (str,), "seed": (int,)}

# experiment -> required keys ("section.key")
REQUIRED = {
    "derive-test1": ["problem.Ns"],
    "helmholtz-test2": ["problem.k"],
    "eigen-spectra": ["problem.ns"],
    "epsilon-gamma-map": ["problem.epsilons", "problem.gammas"],
    "converge": ["problem.Ns"],
    "timing": ["problem.Ns", "problem.kernels"],
    "acoustic-dirac": ["problem.frequency"],
    "acoustic-freqs": ["problem.frequencies", "problem.source"],
    "acoustic-halton": ["problem.frequency"],
    "acoustic-time": ["problem.f_max", "problem.source", "problem.receivers", "problem.dt", "problem.T"],
}

NODE_LAYOUTS = ("cartesian", "halton", "random", "file")
TEST1_SETTINGS = TEST1_NAMES


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    experiment: str
    output: Path
    kernel: KernelSpec
    nodes: dict = field(default_factory=dict)
    n: int = 10
    poly_degree: Optional[int] = None
    problem: dict = field(default_factory=dict)
    seed: int = 0
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.problem.get(key, default)

    def echo(self) -> dict:
        return self.raw


def _typecheck(where, value, types):
    # bool is an int subclass; keep it out of numeric fields
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{where}: expected {types[0].__name__}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{where}: expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc


def parse(raw: dict, base_dir=".") -> ExperimentConfig:
    """Validate a raw mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    for key, val in raw.items():
        if key in TOP:
            _typecheck(key, val, TOP[key])
        elif key in SCHEMA:
            if not isinstance(val, dict):
                raise ConfigError(f"{key} must be a table")
            for k, v in val.items():
                if k not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{k}")
                _typecheck(f"{key}.{k}", v, SCHEMA[key][k])
        else:
            raise ConfigError(f"unknown key {key}")

    exp = raw.get("experiment")
    if exp is None:
        raise ConfigError("missing key experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    for req in REQUIRED[exp]:
        sec, k = req.split(".")
        if k not in raw.get(sec, {}):
            raise ConfigError(f"experiment {exp} requires {req}")

    try:
        kernel = KernelSpec.from_dict(raw.get("kernel", {"variant": "hybrid", "epsilon": 1.0, "gamma": 1e-3}))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"kernel: {exc}") from exc

    nodes = dict(raw.get("nodes", {}))
    layout = nodes.get("layout", "cartesian")
    if layout not in NODE_LAYOUTS:
        raise ConfigError(f"nodes.layout must be one of {NODE_LAYOUTS}")
    if "domain" in nodes:
        d = nodes["domain"]
        if len(d) != 4 or not all(isinstance(v, NUM) and not isinstance(v, bool) for v in d):
            raise ConfigError("nodes.domain must be [x0, x1, z0, z1]")
        if not (d[0] < d[1] and d[2] < d[3]):
            raise ConfigError("nodes.domain must satisfy x0 < x1 and z0 < z1")
    if layout == "file":
        if "file" not in nodes:
            raise ConfigError("nodes.layout = 'file' requires nodes.file")
        nodes["file"] = str((Path(base_dir) / nodes["file"]).resolve())
    for k in ("nx", "nz", "N"):
        if k in nodes and nodes[k] < 2:
            raise ConfigError(f"nodes.{k} must be >= 2")

    st = raw.get("stencil", {})
    n = st.get("n", 30 if exp == "derive-test1" else 10)
    if n < 2:
        raise ConfigError("stencil.n must be >= 2")
    problem = dict(raw.get("problem", {}))
    _check_problem(exp, problem)

    out = Path(raw.get("output", f"out/{exp}"))
    if not out.is_absolute():
        out = (Path(base_dir) / out).resolve()
    return ExperimentConfig(exp, out, kernel, nodes, n, st.get("poly_degree"), problem, raw.get("seed", 0), Path(base_dir), raw)


def _numbers(name, seq, positive=False):
    for v in seq:
        if isinstance(v, bool) or not isinstance(v, NUM):
            raise ConfigError(f"{name} must contain numbers")
        if positive and v <= 0:
            raise ConfigError(f"{name} entries must be positive")


def _point(name, p):
    if not (isinstance(p, list) and len(p) == 2):
        raise ConfigError(f"{name} must be a point [x, z]")
    _numbers(name, p)


def _check_problem(exp, p):
    if "k" in p and p["k"] < 0:
        raise ConfigError("problem.k must be nonnegative")
    if "c" in p and p["c"] <= 0:
        raise ConfigError("problem.c must be positive")
    for key in ("Ns", "ns", "epsilons", "frequencies"):
        if key in p:
            _numbers(f"problem.{key}", p[key], positive=key != "frequencies")
            if not p[key]:
                raise ConfigError(f"problem.{key} must not be empty")
    if "gammas" in p:
        _numbers("problem.gammas", p["gammas"])
        if any(g < 0 for g in p["gammas"]):
            raise ConfigError("problem.gammas must be nonnegative")
    if "Ns" in p and exp == "timing" and p["Ns"] != sorted(p["Ns"]):
        raise ConfigError("problem.Ns must be ascending")
    if "frequencies" in p and (p["frequencies"] != sorted(p["frequencies"]) or min(p["frequencies"]) < 0):
        raise ConfigError("problem.frequencies must be nonnegative and sorted")
    if "settings" in p:
        bad = [s for s in p["settings"] if s not in TEST1_SETTINGS]
        if bad:
            raise ConfigError(f"unknown derive-test1 settings {bad}; choose from {TEST1_SETTINGS}")
    if "kernels" in p:
        for k in p["kernels"]:
            if not isinstance(k, dict):
                raise ConfigError("problem.kernels entries must be kernel tables")
            try:
                KernelSpec.from_dict(k)
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"problem.kernels: {exc}") from exc
    if "source" in p:
        _point("problem.source", p["source"])
    if "receivers" in p:
        for r in p["receivers"]:
            _point("problem.receivers", r)
    if p.get("source_kind", "dirac") not in ("dirac", "ricker-peak", "ricker-delayed"):
        raise ConfigError("problem.source_kind must be dirac, ricker-peak or ricker-delayed")
    for key in ("dt", "T", "f_max", "df", "fc", "f0", "length_scale", "frequency"):
        if key in p and p[key] <= 0:
            raise ConfigError(f"problem.{key} must be positive")
    if "boundaries" in p and any(b not in ("absorbing", "neumann") for b in p["boundaries"]):
        raise ConfigError("problem.boundaries entries must be absorbing or neumann")


def load(path) -> ExperimentConfig:
    path = Path(path)
    return parse(load_raw(path), base_dir=path.resolve().parent)
