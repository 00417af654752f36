"""Command-line entry point: ``capillarity <subcommand> ...``.

Every subcommand writes its tables, JSON and figures to ``--out`` and exits
with status 0 exactly when its asserted checks pass.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..anisotropy import (
    check_conditions,
    default_center_grid,
    estimate_t_minus,
    estimate_t_plus,
)
from ..functionals import ISO_CONSTANT
from ..solver import minimize_isovolumetric, with_overrides
from ..spheremesh import write_obj
from . import acceptance, plots
from .config import RunConfig, load_config
from .config import _literal as literal
from .experiments import (
    PROBE_CONFIG,
    GluingReport,
    ProbeReport,
    ProbeRun,
    gluing_concavity,
    nonexistence_probe,
)
from .scan import (
    cached_mesh,
    default_t_grid,
    derivative_identity_check,
    minimize_isoperimetric_ratio,
    scan_isovolumetric,
    subadditivity_check,
)


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), literal(value.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="capillarity", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, field=True):
        sp.add_argument("--config", type=Path, help="INI run configuration")
        sp.add_argument("--level", type=int, help="icosphere subdivision level")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--residual-tol", type=float)
        sp.add_argument("--seed", type=int)
        if field:
            sp.add_argument("--field", help="builtin field label")
            sp.add_argument("--param", type=_param, action="append", default=[],
                            metavar="KEY=VALUE", help="field parameter (repeatable)")

    s = sub.add_parser("solve", help="one volume-constrained minimisation")
    common(s)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--center", type=_floats, help="x,y,z of the starting sphere")

    s = sub.add_parser("scan", help="S_K(t) over a log grid")
    common(s)
    s.add_argument("--t-min", type=float)
    s.add_argument("--t-max", type=float)
    s.add_argument("--points", type=int)
    s.add_argument("--workers", type=int)

    s = sub.add_parser("ratio", help="minimise the isoperimetric ratio over t")
    common(s)
    s.add_argument("--t-min", type=float)
    s.add_argument("--t-max", type=float)
    s.add_argument("--points", type=int)

    s = sub.add_parser("glue", help="two-bubble gluing curve")
    common(s)
    s.add_argument("--t1", type=float, default=4 * np.pi / 3)
    s.add_argument("--t2", type=float, default=2.0)

    s = sub.add_parser("probe", help="escape probe at small negative volume")
    common(s)
    s.add_argument("--t", type=float, action="append", help="negative volume (repeatable)")

    s = sub.add_parser("field-check", help="sampled growth conditions and t+/t-")
    common(s)

    s = sub.add_parser("verify", help="run the full acceptance suite")
    common(s, field=False)
    return p


def resolve(args):
    rc = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "field", None):
        if args.field != rc.field_label:
            rc.field_params = {}
        rc.field_label = args.field
    for k, v in getattr(args, "param", []) or []:
        rc.field_params[k] = v
    if args.level is not None:
        rc.level = args.level
    if args.out is not None:
        rc.outdir = str(args.out)
    for name in ("t_min", "t_max", "points", "workers"):
        if getattr(args, name, None) is not None:
            setattr(rc, name, getattr(args, name))
    rc.solver = with_overrides(
        rc.solver,
        max_iters=args.max_iters,
        residual_tol=args.residual_tol,
        seed=args.seed,
        center=getattr(args, "center", None),
    )
    return rc


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_default) + "\n")


def _default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _k0(fld, seed):
    if fld.label == "zero":
        return 0.0
    return check_conditions(fld, seed=seed).k0_estimate


def _scan_outputs(table, out, fld, seed):
    table.to_csv(out / "scan.csv")
    table.to_json(out / "scan.json", indent=2)
    k0 = _k0(fld, seed)
    plots.plot_scan(table, out / "plot_scan.svg")
    plots.plot_normalized(table, out / "plot_normalized.svg", k0)
    plots.plot_lambda(table, out / "plot_lambda.svg", k0)


def cmd_solve(rc, out, t):
    fld = rc.make_field()
    res = minimize_isovolumetric(cached_mesh(rc.level), fld, t, rc.solver)
    res.write(out)
    print(f"status={res.status} E={res.breakdown.energy_E:.10g} lambda={res.lam:.8g} "
          f"residual={res.residual:.3e} iterations={res.iterations}")
    return res.status == "converged"


def cmd_scan(rc, out):
    fld = rc.make_field()
    grid = default_t_grid(rc.t_min, rc.t_max, rc.points)
    table = scan_isovolumetric(fld, grid, rc.level, rc.solver, rc.workers, rc.solver.seed)
    _scan_outputs(table, out, fld, rc.solver.seed)
    conv = table.converged()
    ok = len(conv) == len(table) and all(r.bound_ok for r in table.rows)
    report = {"rows": len(table), "converged": len(conv),
              "bounds_ok": all(r.bound_ok for r in table.rows)}
    if fld.label != "zero":
        report["gap_positive"] = all(r.gap > 0 for r in conv)
    if len(conv) >= 3:
        d = derivative_identity_check(table)
        report["derivative_median_deviation"] = d.median_deviation
        sub = subadditivity_check(table)
        report["subadditive"] = sub.passed
        ok &= d.passed and sub.passed
    _write_json(out / "result.json", report)
    print(json.dumps(report))
    return bool(ok)


def cmd_ratio(rc, out):
    fld = rc.make_field()
    grid = default_t_grid(rc.t_min, rc.t_max, rc.points)
    table = scan_isovolumetric(fld, grid, rc.level, rc.solver, seed=rc.solver.seed)
    _scan_outputs(table, out, fld, rc.solver.seed)
    rr = minimize_isoperimetric_ratio(fld, table=table, level=rc.level, config=rc.solver)
    k0 = _k0(fld, rc.solver.seed)
    window = [(1 - k0 / 2) * ISO_CONSTANT, ISO_CONSTANT]
    in_window = window[0] * (1 - 1e-2) <= rr.S_K_const <= window[1] * (1 + 1e-2)
    report = {**rr.to_dict(), "window": window, "in_window": in_window}
    _write_json(out / "result.json", report)
    write_obj(rr.surface, out / "surface.obj")
    print(f"t0={rr.t0:.6g} S_K={rr.S_K_const:.6g} lambda={rr.lam:.6g} "
          f"identity_residual={rr.identity_residual:.3e}")
    return bool(rr.passed and in_window)


def cmd_glue(rc, out, t1, t2):
    fld = rc.make_field()
    mesh = cached_mesh(rc.level)
    u1 = minimize_isovolumetric(mesh, fld, t1, rc.solver).surface
    u2 = minimize_isovolumetric(mesh, fld, t2, rc.solver).surface
    rep = gluing_concavity(fld, u1, u2)
    _write_json(out / "result.json", rep.to_dict())
    with open(out / "gluing.csv", "w") as fh:
        fh.write("s,f,volume\n")
        for row in zip(rep.s, rep.f, rep.volume):
            fh.write(",".join(repr(v) for v in row) + "\n")
    plots.plot_gluing(rep, out / "plot_gluing.svg")
    print(f"c={rep.c:.6g} volume_error={rep.volume_error:.2e} passed={rep.passed}")
    return rep.passed


def cmd_probe(rc, out, ts, max_iters=None):
    fld = rc.make_field()
    cfg = with_overrides(PROBE_CONFIG, max_iters=max_iters, center=rc.solver.center)
    rep = nonexistence_probe(fld, ts, cfg, rc.level, rc.solver.seed)
    _write_json(out / "result.json", rep.to_dict())
    with open(out / "probe.csv", "w") as fh:
        fh.write("t,iteration,energy_ratio,centroid_norm\n")
        for r in rep.runs:
            for i, (e, c) in enumerate(zip(r.ratios, r.centroid)):
                fh.write(f"{r.t!r},{i},{e!r},{c!r}\n")
    plots.plot_probe(rep, out / "plot_probe.svg")
    for r in rep.runs:
        print(f"t={r.t:.4g} status={r.status} min_ratio={r.min_ratio:.6f} "
              f"final_centroid={r.centroid[-1]:.3g}")
    return rep.passed


def cmd_field_check(rc, out):
    fld = rc.make_field()
    rep = check_conditions(fld, seed=rc.solver.seed)
    centers = default_center_grid()
    radii = np.geomspace(0.05, 8.0, 40)
    d = json.loads(rep.to_json())
    d["t_plus"] = estimate_t_plus(fld, centers, radii)
    d["t_minus"] = estimate_t_minus(fld, centers, radii)
    _write_json(out / "field_check.json", d)
    print(json.dumps({k: d[k] for k in ("k0_estimate", "k1_holds", "k2_holds", "k3_estimate",
                                         "k3_holds", "k4_holds", "t_plus", "t_minus")}))
    return rep.k1_holds and rep.k2_holds


def cmd_verify(rc, out):
    t0 = time.perf_counter()
    crit, table = acceptance.run_all(rc.level, reports=True)
    well = acceptance.radial_well(acceptance.WELL_A)
    _scan_outputs(table, out, well, rc.solver.seed)
    by_number = {c.number: c for c in crit}
    glue = by_number[9].details.pop("report")
    plots.plot_gluing(GluingReport(**glue), out / "plot_gluing.svg")
    probe = by_number[10].details.pop("report")
    probe["runs"] = [ProbeRun(**r) for r in probe["runs"]]
    plots.plot_probe(ProbeReport(**probe), out / "plot_probe.svg")
    res = minimize_isovolumetric(cached_mesh(rc.level), well, acceptance.UNIT_BALL)
    res.write(out)
    for c in crit:
        print(c.line())
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in crit)
    _write_json(out / "acceptance.json", {"passed": ok, "seconds": elapsed,
                                          "criteria": [c.to_dict() for c in crit]})
    print(f"verify: {'PASS' if ok else 'FAIL'} in {elapsed:.1f} s")
    return ok


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rc = resolve(args)
    out = Path(rc.outdir)
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    try:
        if cmd == "solve":
            ok = cmd_solve(rc, out, args.t)
        elif cmd == "scan":
            ok = cmd_scan(rc, out)
        elif cmd == "ratio":
            ok = cmd_ratio(rc, out)
        elif cmd == "glue":
            ok = cmd_glue(rc, out, args.t1, args.t2)
        elif cmd == "probe":
            ok = cmd_probe(rc, out, args.t, args.max_iters)
        elif cmd == "field-check":
            ok = cmd_field_check(rc, out)
        else:
            ok = cmd_verify(rc, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
