"""Volume-constrained minimisation of E = D + Q on sphere-type surface maps.

The iteration is a projected gradient descent in the discrete H^1 inner
product ``L + a a^T`` (stiffness matrix plus the mean constraint), followed
by an exact cube-root rescale back onto the volume level set.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import functionals as fn
from .anisotropy import DEFAULT_NODES, best_trial_center
from .functionals import ISO_CONSTANT, UndefinedMultiplierError
from .spheremesh import (
    DEGENERATE_AREA_RATIO,
    MeshDegeneracyError,
    SurfaceMap,
    face_area_vectors,
    init_sphere,
    rescale_to_volume,
    tangential_smooth,
    write_obj,
)

log = logging.getLogger(__name__)

UNIT_BALL = 4.0 * np.pi / 3.0

STATUSES = ("converged", "max_iters", "escaped", "mesh_degenerate")
HISTORY_FIELDS = ("iteration", "energy", "volume_drift", "residual", "lambda", "centroid_norm", "step")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    ``smooth_every = 0`` disables tangential smoothing. ``center = None``
    starts from the best sphere trial found on the default center grid.
    Escape is declared when the centroid norm exceeds ``escape_radius`` and
    the residual changed by less than ``stagnation_rtol`` (relative) over the
    last ``stagnation_window`` iterations.
    """

    step_size: float = 1.0
    backtrack: float = 0.5
    max_halvings: int = 40
    armijo: float = 1e-4
    max_iters: int = 2000
    residual_tol: float = 1e-4
    smooth_every: int = 0
    smooth_strength: float = 0.5
    escape_radius: float = 1e3
    stagnation_window: int = 100
    stagnation_rtol: float = 1e-6
    seed: int = 0
    nodes: int = DEFAULT_NODES
    center: tuple | None = None

    def __post_init__(self):
        for name in ("step_size", "residual_tol", "escape_radius", "stagnation_rtol", "armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.max_iters < 1 or self.max_halvings < 1 or self.stagnation_window < 1:
            raise ValueError("iteration counts must be positive")
        if self.smooth_every < 0:
            raise ValueError("smooth_every must be >= 0")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if len(self.center) != 3:
                raise ValueError("center must have three coordinates")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    surface: SurfaceMap
    breakdown: fn.EnergyBreakdown
    lam: float
    residual: float
    status: str
    t: float
    iterations: int
    history: list = field(default_factory=list)
    field_label: str = ""
    split_flag: bool = False

    def summary(self):
        return {
            "status": self.status,
            "t": self.t,
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "field": self.field_label,
            "level": self.surface.mesh.level,
            "centroid": self.surface.centroid().tolist(),
            "split_flag": self.split_flag,
            "breakdown": asdict(self.breakdown),
        }

    def to_json(self, **kw):
        return json.dumps(self.summary(), **kw)

    def write(self, outdir, stem=""):
        """Write ``result.json``, ``history.csv`` and ``surface.obj``."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}result.json").write_text(self.to_json(indent=2) + "\n")
        with open(out / f"{stem}history.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
            w.writeheader()
            for row in self.history:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        write_obj(self.surface, out / f"{stem}surface.obj")
        return out


def multiplier_bounds(t, k0):
    """Two-sided bound on the multiplier of a minimiser with volume ``t``."""
    if not t > 0:
        raise ValueError("multiplier bounds need t > 0")
    if not 0.0 <= k0 < 2.0:
        raise ValueError("multiplier bounds need 0 <= k0 < 2")
    c = ISO_CONSTANT / (3.0 * np.cbrt(t))
    return (2.0 - k0) ** 2 * c / (2.0 + k0), 2.0 * (2.0 + k0) * c / (2.0 - k0)


def extract_multiplier(u, fld, nodes=DEFAULT_NODES):
    return fn.extract_multiplier(u, fld, nodes)


def _degenerate(x, faces):
    a = np.linalg.norm(face_area_vectors(x, faces), axis=1)
    return a.min() < DEGENERATE_AREA_RATIO * max(a.mean(), np.finfo(float).tiny)


def _split_flag(u, gap=4.0):
    """Two position clusters separated by more than ``gap`` times their size.

    A cheap diagnostic: split the vertices by the sign of their coordinate
    along the principal axis and compare the cluster distance to the spreads.
    """
    x = u.positions - u.positions.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    proj = x @ vt[0]
    lo, hi = x[proj < 0], x[proj >= 0]
    if len(lo) < 4 or len(hi) < 4:
        return False
    d = np.linalg.norm(lo.mean(axis=0) - hi.mean(axis=0))
    spread = max(np.ptp(lo @ vt[0]), np.ptp(hi @ vt[0]))
    return bool(d > gap * spread)


def default_init(mesh, fld, t, config):
    if config.center is not None:
        center = config.center
    elif fld.label == "zero":
        center = (0.0, 0.0, 0.0)
    else:
        center = best_trial_center(fld, t)
    return init_sphere(mesh, t, center)


def minimize_isovolumetric(mesh, fld, t, config=None, init=None, callback=None):
    """Minimise E over surfaces with signed volume ``t``.

    Parameters
    ----------
    mesh : SphereMesh
    fld : AnisotropyField
    t : float
        Nonzero target volume.
    config : SolverConfig, optional
    init : SurfaceMap, optional
        Starting surface; rescaled onto the constraint before iterating.
    callback : callable, optional
        Called as ``callback(iteration, surface)`` after every accepted step.

    Returns
    -------
    SolveResult
    """
    t = float(t)
    if t == 0.0 or not np.isfinite(t):
        raise ValueError("target volume must be finite and nonzero")
    cfg = config or SolverConfig()
    nodes = cfg.nodes
    u = default_init(mesh, fld, t, cfg) if init is None else rescale_to_volume(init, t)
    faces = mesh.faces

    def evaluate(v):
        return fn.energy(v, fld, nodes)

    # translations: force ~ |t| grad K, stiffness ~ |t| hess K
    mean_scale = UNIT_BALL / abs(t)
    history = []
    energy = evaluate(u)
    alpha = cfg.step_size
    status = "max_iters"
    lam = np.nan
    res = np.inf
    it = 0
    res_log = []
    for it in range(cfg.max_iters + 1):
        ge = fn.grad_energy(u, fld, nodes)
        gv = fn.grad_volume(u)
        lam = fn.extract_multiplier(u, fld, nodes, grads=(ge, gv))
        res = fn.el_residual(u, fld, lam, nodes, grads=(ge, gv))
        cnorm = float(np.linalg.norm(u.centroid()))
        history.append({
            "iteration": it,
            "energy": energy,
            "volume_drift": fn.volume(u) / t - 1.0,
            "residual": res,
            "lambda": lam,
            "centroid_norm": cnorm,
            "step": alpha if it else 0.0,
        })
        res_log.append(res)
        if res <= cfg.residual_tol:
            status = "converged"
            break
        w = cfg.stagnation_window
        if cnorm > cfg.escape_radius and len(res_log) > w:
            old = res_log[-1 - w]
            if abs(res - old) <= cfg.stagnation_rtol * max(abs(old), 1e-300):
                status = "escaped"
                break
        if it == cfg.max_iters:
            break

        de = mesh.riesz(ge, mean_scale)
        dv = mesh.riesz(gv, mean_scale)
        lam_r = float(np.vdot(ge, dv) / np.vdot(gv, dv))
        d = -(de - lam_r * dv)
        slope = float(np.vdot(ge, d))
        if not slope < 0.0:
            log.debug("no descent direction at iteration %d", it)
            status = "converged" if res <= 10 * cfg.residual_tol else "max_iters"
            break

        accepted = None
        a = min(2.0 * alpha, cfg.step_size * 64.0)
        for _ in range(cfg.max_halvings):
            x = u.positions + a * d
            if np.all(np.isfinite(x)) and not _degenerate(x, faces):
                try:
                    trial = rescale_to_volume(u.with_positions(x), t)
                except MeshDegeneracyError:
                    trial = None
                if trial is not None:
                    e = evaluate(trial)
                    if e <= energy + cfg.armijo * a * slope:
                        accepted = (trial, e)
                        break
            a *= cfg.backtrack
        if accepted is None:
            if _degenerate(u.positions, faces):
                status = "mesh_degenerate"
            break
        u, energy = accepted
        alpha = a

        if cfg.smooth_every and (it + 1) % cfg.smooth_every == 0:
            try:
                u = tangential_smooth(u, cfg.smooth_strength)
            except MeshDegeneracyError:
                status = "mesh_degenerate"
                break
            energy = evaluate(u)
        if callback is not None:
            callback(it + 1, u)

    if status != "mesh_degenerate" and _degenerate(u.positions, faces):
        status = "mesh_degenerate"
    try:
        lam = fn.extract_multiplier(u, fld, nodes)
        res = fn.el_residual(u, fld, lam, nodes)
    except UndefinedMultiplierError:
        status = "mesh_degenerate"
    return SolveResult(
        surface=u,
        breakdown=fn.breakdown(u, fld, nodes),
        lam=float(lam),
        residual=float(res),
        status=status,
        t=t,
        iterations=it,
        history=history,
        field_label=fld.label,
        split_flag=_split_flag(u),
    )


def with_overrides(config, **kw):
    """Copy of ``config`` with the non-None keyword values replaced."""
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
