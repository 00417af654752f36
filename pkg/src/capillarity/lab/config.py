"""INI run configuration.

Example::

    [field]
    label = radial_well
    a = 0.5

    [mesh]
    level = 5

    [solver]
    max_iters = 2000
    residual_tol = 1e-4

    [scan]
    t_min = 0.05
    t_max = 50
    points = 25

    [output]
    dir = out
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, fields

from ..anisotropy import make_field
from ..solver import SolverConfig


@dataclass
class RunConfig:
    field_label: str = "radial_well"
    field_params: dict = field(default_factory=dict)
    level: int = 5
    solver: SolverConfig = field(default_factory=SolverConfig)
    t_min: float = 0.05
    t_max: float = 50.0
    points: int = 25
    workers: int = 1
    outdir: str = "out"

    def make_field(self):
        return make_field(self.field_label, **self.field_params)


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def load_config(path):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return config_from_parser(cp)


def config_from_parser(cp):
    rc = RunConfig()
    if cp.has_section("field"):
        sec = dict(cp["field"])
        rc.field_label = sec.pop("label", rc.field_label)
        rc.field_params = {k: _literal(v) for k, v in sec.items()}
    if cp.has_section("mesh"):
        rc.level = cp.getint("mesh", "level", fallback=rc.level)
    if cp.has_section("solver"):
        known = {f.name for f in fields(SolverConfig)}
        extra = set(cp["solver"]) - known
        if extra:
            raise ValueError(f"unknown solver keys: {sorted(extra)}")
        rc.solver = SolverConfig(**{k: _literal(v) for k, v in cp["solver"].items()})
    if cp.has_section("scan"):
        s = cp["scan"]
        rc.t_min = s.getfloat("t_min", rc.t_min)
        rc.t_max = s.getfloat("t_max", rc.t_max)
        rc.points = s.getint("points", rc.points)
        rc.workers = s.getint("workers", rc.workers)
    if cp.has_section("output"):
        rc.outdir = cp["output"].get("dir", rc.outdir)
    return rc
