"""Numbered acceptance checks, shared by the ``verify`` command and the tests.

Every check returns a :class:`Criterion` with a pass flag and the measured
numbers; nothing is asserted here.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import functionals as fn
from ..anisotropy import (
    ball_integral,
    check_conditions,
    cone_sign,
    eval_QK,
    jacobian_QK,
    radial_well,
    shifted_well,
    zero_field,
)
from ..functionals import ISO_CONSTANT
from ..solver import SolverConfig, minimize_isovolumetric, multiplier_bounds
from ..spheremesh import init_sphere, SurfaceMap
from .experiments import gluing_concavity, nonexistence_probe
from .scan import (
    cached_mesh,
    default_t_grid,
    derivative_identity_check,
    minimize_isoperimetric_ratio,
    scan_isovolumetric,
)
from .surfaces import KINDS, ellipsoid, random_direction, random_surface, random_surfaces

UNIT_BALL = 4.0 * math.pi / 3.0
WELL_A = 0.5
# 4 pi - 4 pi a (1 - pi/4): unit sphere centred in the well
WELL_TRIAL = 4.0 * math.pi - 4.0 * math.pi * WELL_A * (1.0 - math.pi / 4.0)


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number:>2}: {self.title} ({self.seconds:.1f} s)"

    def to_dict(self):
        return asdict(self)


def _timed(number, title):
    def wrap(fn_):
        def run(*a, **kw):
            t0 = time.perf_counter()
            ok, details = fn_(*a, **kw)
            return Criterion(number, title, bool(ok), _plain(details), time.perf_counter() - t0)
        run.__name__ = fn_.__name__
        run.__doc__ = fn_.__doc__
        return run
    return wrap


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@_timed(1, "sphere closed forms")
def sphere_closed_forms(level=5):
    errs = {}
    for lv in (level - 2, level - 1, level):
        u = SurfaceMap(cached_mesh(lv).vertices, cached_mesh(lv))
        errs[lv] = {
            "dirichlet": abs(fn.dirichlet(u) / (4 * math.pi) - 1),
            "area": abs(fn.area(u) / (4 * math.pi) - 1),
            "volume": abs(fn.volume(u) / UNIT_BALL - 1),
        }
    top = errs[level]
    rates = {k: [errs[lv - 1][k] / errs[lv][k] for lv in (level - 1, level)] for k in top}
    ok = all(v <= 1e-3 for v in top.values()) and all(
        3.5 <= r <= 4.5 for rs in rates.values() for r in rs)
    return ok, {"relative_errors": errs, "reduction_per_level": rates}


@_timed(2, "isoperimetric inequality on random surfaces")
def isoperimetric_suite(level=5, n=200, seed=0):
    mesh = cached_mesh(level)
    worst_iso, worst_ad = -np.inf, -np.inf
    for u in random_surfaces(mesh, n, seed):
        a, d, v = fn.area(u), fn.dirichlet(u), fn.volume(u)
        worst_iso = max(worst_iso, ISO_CONSTANT * abs(v) ** (2 / 3) / (1.005 * a))
        worst_ad = max(worst_ad, a - d)
    ok = worst_iso <= 1.0 and worst_ad <= 1e-12
    return ok, {"max_S_V23_over_1.005A": worst_iso, "max_A_minus_D": worst_ad, "n": n}


def _fd_rel(f, g, u, direction, h=1e-5):
    x = u.positions
    fp = f(u.with_positions(x + h * direction))
    fm = f(u.with_positions(x - h * direction))
    fd = (fp - fm) / (2 * h)
    an = float(np.vdot(g, direction))
    return abs(fd - an) / max(abs(an), 1e-300)


@_timed(3, "gradient checks")
def gradient_checks(level=4, pairs=20, seed=0):
    mesh = cached_mesh(level)
    rng = np.random.default_rng(seed)
    fields_ = [radial_well(WELL_A), cone_sign(), shifted_well(0.5, (0.3, -0.2, 0.1))]
    worst = {"dirichlet": 0.0, "volume": 0.0, "q": 0.0, "radial": 0.0}
    for i in range(pairs):
        u = random_surface(mesh, rng, KINDS[i % len(KINDS)])
        d = random_direction(mesh, rng)
        fld = fields_[i % len(fields_)]
        worst["dirichlet"] = max(worst["dirichlet"], _fd_rel(fn.dirichlet, fn.grad_dirichlet(u), u, d))
        worst["volume"] = max(worst["volume"], _fd_rel(fn.volume, fn.grad_volume(u), u, d))
        worst["q"] = max(worst["q"], _fd_rel(lambda v: fn.q_term(v, fld), fn.grad_q(u, fld), u, d))
        for s in (0.5, 1.0, 2.0):
            h = 1e-5
            fd = (fn.q_term(u.scaled(s + h), fld) - fn.q_term(u.scaled(s - h), fld)) / (2 * h)
            an = fn.radial_q_derivative(u, fld, s)
            worst["radial"] = max(worst["radial"], abs(fd - an) / abs(an))
    return max(worst.values()) <= 1e-6, {"max_relative_error": worst, "pairs": pairs}


@_timed(4, "construction identities")
def construction_identities(level=5, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(2000, 3))
    p *= (10 * rng.random(2000) ** (1 / 3) / np.linalg.norm(p, axis=1))[:, None]
    trace = 0.0
    for fld in (radial_well(WELL_A), cone_sign(), shifted_well(0.5, (1.0, 0.5, 0.0))):
        tr = np.trace(jacobian_QK(fld, p), axis1=-2, axis2=-1)
        trace = max(trace, float(np.abs(tr - fld(p)).max()))
    well = radial_well(WELL_A)
    report = check_conditions(well, seed=seed)
    k0 = report.k0_estimate
    qmax = float(np.linalg.norm(eval_QK(well, p), axis=-1).max())
    u = init_sphere(cached_mesh(level), UNIT_BALL)
    q = fn.q_term(u, well)
    closed = -4 * math.pi * WELL_A * (1 - math.pi / 4)
    ball = ball_integral(well, np.zeros(3), 1.0)
    ok = trace <= 1e-9 and max(qmax, report.q_sup) <= k0 / 2 and abs(q - closed) <= 1e-3
    return ok, {
        "max_trace_error": trace,
        "k0": k0,
        "max_QK": max(qmax, report.q_sup),
        "q_term_unit_sphere": q,
        "closed_form": closed,
        "ball_quadrature": ball,
    }


def _perturbed_start(mesh, seed):
    rng = np.random.default_rng(seed)
    u = ellipsoid(mesh, rng, spread=0.25)
    return u.with_positions(u.positions + 0.01 * rng.normal(size=u.positions.shape))


@_timed(5, "K = 0 solver recovers round spheres")
def zero_field_solver(level=5, seed=0, config=None):
    mesh = cached_mesh(level)
    cfg = config or SolverConfig(max_iters=3000)
    out = {}
    ok = True
    for t in (0.5, UNIT_BALL, 10.0):
        res = minimize_isovolumetric(mesh, zero_field(), t, cfg, init=_perturbed_start(mesh, seed))
        e_ratio = res.breakdown.energy_E / (ISO_CONSTANT * t ** (2 / 3))
        lam_ref = 2 / 3 * ISO_CONSTANT * t ** (-1 / 3)
        lam_err = abs(res.lam - lam_ref) / lam_ref
        defect = res.breakdown.conformality_defect
        ok &= (res.status == "converged" and abs(e_ratio - 1) <= 0.01 and lam_err <= 0.1
               and defect <= 1e-2)
        out[f"{t:.6g}"] = {
            "status": res.status, "iterations": res.iterations, "energy_ratio": e_ratio,
            "lambda": res.lam, "lambda_rel_error": lam_err, "conformality_defect": defect,
        }
    return ok, out


@_timed(6, "existence regime in the radial well")
def existence_regime(level=5, config=None, seed=0):
    mesh = cached_mesh(level)
    well = radial_well(WELL_A)
    t = UNIT_BALL
    res = minimize_isovolumetric(mesh, well, t, config or SolverConfig())
    k0 = check_conditions(well, seed=seed).k0_estimate
    lo, hi = multiplier_bounds(t, k0)
    e = res.breakdown.energy_E
    ok = (res.status == "converged" and e <= WELL_TRIAL * 1.01 and e < 4 * math.pi
          and lo * 0.85 <= res.lam <= hi * 1.15)
    return ok, {"status": res.status, "energy": e, "trial_bound": WELL_TRIAL, "lambda": res.lam,
                "bounds": [lo, hi], "k0": k0, "residual": res.residual}


def well_scan(level=5, config=None, points=25):
    return scan_isovolumetric(radial_well(WELL_A), default_t_grid(points=points), level, config)


@_timed(7, "derivative identity on a 25-point scan")
def derivative_identity(level=5, table=None, config=None):
    table = table or well_scan(level, config)
    rep = derivative_identity_check(table)
    return rep.passed, {"median_deviation": rep.median_deviation, "max_deviation": max(rep.deviation),
                        "rows_used": len(rep.t)}


@_timed(8, "isoperimetric-ratio minimisation")
def isoperimetric_ratio(level=5, table=None, config=None):
    table = table or well_scan(level, config)
    rr = minimize_isoperimetric_ratio(radial_well(WELL_A), table=table, level=level, config=config)
    ok = 0.75 * ISO_CONSTANT <= rr.S_K_const <= ISO_CONSTANT and rr.identity_residual <= 0.1
    return ok, {"t0": rr.t0, "S_K": rr.S_K_const, "window": [0.75 * ISO_CONSTANT, ISO_CONSTANT],
                "lambda": rr.lam, "identity_residual": rr.identity_residual}


@_timed(9, "gluing concavity")
def gluing(level=5, config=None, t1=UNIT_BALL, t2=2.0, seed=0, return_report=False):
    well = radial_well(WELL_A)
    cond = check_conditions(well, seed=seed)
    mesh = cached_mesh(level)
    cfg = config or SolverConfig()
    u1 = minimize_isovolumetric(mesh, well, t1, cfg).surface
    u2 = minimize_isovolumetric(mesh, well, t2, cfg).surface
    rep = gluing_concavity(well, u1, u2)
    ok = cond.k3_holds and rep.c > 0 and rep.volume_error <= 1e-12
    details = {"k3_estimate": cond.k3_estimate, "c": rep.c, "volume_error": rep.volume_error,
               "left_slope": rep.left_slope, "right_slope": rep.right_slope}
    if return_report:
        details["report"] = rep.to_dict()
    return ok, details


@_timed(10, "nonexistence probe")
def nonexistence(level=5, seed=0, return_report=False):
    rep = nonexistence_probe(radial_well(WELL_A), level=level, seed=seed)
    r = rep.runs[0]
    ok = (r.status != "converged" and r.strictly_above and r.monotone_tail
          and rep.control.get("status") == "converged")
    details = {"status": r.status, "iterations": r.iterations, "min_ratio": r.min_ratio,
               "final_centroid": r.centroid[-1], "monotone_tail": r.monotone_tail,
               "control": rep.control, "symmetry_deviation": rep.symmetry_deviation}
    if return_report:
        details["report"] = rep.to_dict()
    return ok, details


CHECKS = {
    1: sphere_closed_forms,
    2: isoperimetric_suite,
    3: gradient_checks,
    4: construction_identities,
    5: zero_field_solver,
    6: existence_regime,
    7: derivative_identity,
    8: isoperimetric_ratio,
    9: gluing,
    10: nonexistence,
}


def run_all(level=5, config=None, table=None, reports=False):
    """Run criteria 1-10; the scan is shared between 7 and 8.

    With ``reports`` the gluing and probe details carry their full reports.

    Returns ``(criteria, table)``.
    """
    out = []
    scan_seconds = 0.0
    for n, check in CHECKS.items():
        if n == 7 and table is None:
            t0 = time.perf_counter()
            table = well_scan(level, config)
            scan_seconds = time.perf_counter() - t0
        kw = {}
        if n in (1, 2, 4, 5, 6, 7, 8, 9, 10):
            kw["level"] = level
        if n in (7, 8):
            kw["table"] = table
        if n in (6, 9) and config is not None:
            kw["config"] = config
        if n in (9, 10) and reports:
            kw["return_report"] = True
        res = check(**kw)
        if n == 7:
            res.seconds += scan_seconds
            res.details["scan_seconds"] = scan_seconds
        out.append(res)
    return out, table
