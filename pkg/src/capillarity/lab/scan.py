"""Scans of the isovolumetric function t -> S_K(t) and analyses built on them."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..anisotropy import default_radii, sample_points
from ..functionals import ISO_CONSTANT, sampled_sup_Q
from ..solver import SolverConfig, minimize_isovolumetric
from ..spheremesh import build_icosphere


DEFAULT_POINTS = 25
BOUND_SLACK = 0.01
DERIVATIVE_SLACK = 0.10


@dataclass
class ScanRow:
    t: float
    S_K_value: float
    lam: float
    dirichlet: float
    q_term: float
    residual: float
    status: str
    gap: float
    normalized: float
    area: float = math.nan
    capillary_F: float = math.nan
    iterations: int = 0
    bound_ok: bool = True


COLUMNS = tuple(f.name for f in fields(ScanRow))
_CASTS = {f.name: f.type for f in fields(ScanRow)}


def _cast(name, text):
    kind = _CASTS[name]
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "bool":
        return text == "True"
    return float(text)


def _eq(a, b):
    if isinstance(a, float) and isinstance(b, float):
        return a == b or (math.isnan(a) and math.isnan(b))
    return a == b


@dataclass
class ScanTable:
    """Rows sorted by t, plus run metadata (field, level, config, seed)."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.t)
        # JSON-normal form (tuples become lists) so round trips compare equal
        self.meta = json.loads(json.dumps(self.meta))

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ScanTable) or self.meta != other.meta or len(self) != len(other):
            return False
        return all(
            _eq(getattr(a, c), getattr(b, c)) for a, b in zip(self.rows, other.rows) for c in COLUMNS
        )

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def converged(self):
        return [r for r in self.rows if r.status == "converged"]

    # -- serialisation ------------------------------------------------------

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in COLUMNS)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source):
        """Parse text produced by :meth:`to_csv` (a path or the text itself)."""
        text = source if "\n" in str(source) else open(source).read()
        lines = text.splitlines()
        meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
        body = lines[1:] if meta or (lines and lines[0].startswith("#")) else lines
        reader = csv.DictReader(body)
        rows = [ScanRow(**{k: _cast(k, v) for k, v in rec.items()}) for rec in reader]
        return cls(rows, meta)

    def to_json(self, path=None, **kw):
        text = json.dumps({"meta": self.meta, "rows": [asdict(r) for r in self.rows]}, **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source):
        text = source if str(source).lstrip().startswith("{") else open(source).read()
        data = json.loads(text)
        return cls([ScanRow(**r) for r in data["rows"]], data["meta"])


def default_t_grid(t_min=0.05, t_max=50.0, points=DEFAULT_POINTS):
    return np.geomspace(t_min, t_max, points)


@functools.lru_cache(maxsize=4)
def cached_mesh(level):
    """Shared mesh per level so its Riesz factorisation is built once."""
    return build_icosphere(level)


def _solve_row(args):
    level, fld, t, cfg, q_sup = args
    mesh = cached_mesh(level)
    res = minimize_isovolumetric(mesh, fld, t, cfg)
    b = res.breakdown
    s0 = ISO_CONSTANT * abs(t) ** (2.0 / 3.0)
    value = b.energy_E
    lower = (1.0 - q_sup) * s0 * (1.0 - BOUND_SLACK)
    upper = s0 * (1.0 + BOUND_SLACK)
    return ScanRow(
        t=float(t),
        S_K_value=value,
        lam=res.lam,
        dirichlet=b.dirichlet,
        q_term=b.q_term,
        residual=res.residual,
        status=res.status,
        gap=s0 - value,
        normalized=value / abs(t) ** (2.0 / 3.0),
        area=b.area,
        capillary_F=b.capillary_F,
        iterations=res.iterations,
        bound_ok=bool(lower <= value <= upper),
    )


def scan_isovolumetric(fld, t_grid=None, level=5, config=None, workers=1, seed=0):
    """One minimisation per grid value; failures are recorded, never raised.

    Each row is checked against ``(1 - |Q_K|_inf) S t^{2/3} <= S_K(t) <=
    S t^{2/3}`` with 1% slack (``bound_ok``).
    """
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t_grid == 0.0):
        raise ValueError("t grid must not contain zero")
    cfg = config or SolverConfig(seed=seed)
    q_sup = 0.0 if fld.label == "zero" else sampled_sup_Q(fld, seed)
    jobs = [(level, fld, float(t), cfg, q_sup) for t in t_grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_solve_row, jobs))
    else:
        rows = [_solve_row(j) for j in jobs]
    meta = {
        "field": fld.to_dict(),
        "level": int(level),
        "config": cfg.to_dict(),
        "seed": int(seed),
        "q_sup": q_sup,
    }
    return ScanTable(rows, meta)


# ---------------------------------------------------------------------------


@dataclass
class DerivativeReport:
    t: list
    lam: list
    fd: list
    deviation: list
    median_deviation: float
    passed: bool
    tol: float = DERIVATIVE_SLACK

    def to_dict(self):
        return asdict(self)


def _central_log(x, y, i):
    """Second-order derivative dy/dx at x[i] on a nonuniform 3-point stencil."""
    h0, h1 = x[i] - x[i - 1], x[i + 1] - x[i]
    return (-h1 / (h0 * (h0 + h1)) * y[i - 1] + (h1 - h0) / (h0 * h1) * y[i]
            + h0 / (h1 * (h0 + h1)) * y[i + 1])


def derivative_identity_check(table, tol=DERIVATIVE_SLACK):
    """Compare central differences of S_K in log t with the multiplier column.

    Only interior rows whose two neighbours are converged are used.
    """
    rows = table.rows
    if len(rows) < 3:
        raise ValueError("derivative check needs at least 3 rows")
    t = np.array([r.t for r in rows])
    s = np.array([r.S_K_value for r in rows])
    ok = np.array([r.status == "converged" for r in rows])
    x = np.log(np.abs(t))
    out_t, out_l, out_fd, dev = [], [], [], []
    for i in range(1, len(rows) - 1):
        if not (ok[i - 1] and ok[i] and ok[i + 1]):
            continue
        d = _central_log(x, s, i) / t[i]
        out_t.append(float(t[i]))
        out_l.append(rows[i].lam)
        out_fd.append(float(d))
        dev.append(float(abs(rows[i].lam - d) / abs(rows[i].lam)))
    if not dev:
        raise ValueError("derivative check needs 3 consecutive converged rows")
    med = float(np.median(dev))
    return DerivativeReport(out_t, out_l, out_fd, dev, med, bool(med <= tol), tol)


# ---------------------------------------------------------------------------


def interpolate_log(table, t, column="S_K_value"):
    """Value at ``t`` by linear interpolation of the normalised column in log t.

    Exact for the table's own grid points. Rows that did not converge are
    ignored. Values of S_K are recovered as ``t^{2/3}`` times the interpolant.
    """
    rows = [r for r in table.rows if r.status == "converged"]
    ts = np.array([r.t for r in rows])
    if not len(ts) or not ts.min() <= t <= ts.max():
        raise ValueError(f"t = {t} lies outside the converged range of the table")
    norm = np.array([getattr(r, column) for r in rows]) / np.abs(ts) ** (2.0 / 3.0)
    return float(abs(t) ** (2.0 / 3.0) * np.interp(np.log(t), np.log(ts), norm))


@dataclass
class SubadditivityReport:
    pairs: list
    slack: list
    passed: bool
    tol: float


def subadditivity_check(table, pairs=None, tol=BOUND_SLACK):
    """Check ``S_K(t1) + S_K(t2) >= S_K(t1 + t2) - tol * S_K(t1 + t2)``.

    ``pairs`` defaults to all (t_i, t_j) from the table with t_i + t_j inside
    its range. Reported slack is ``S_K(t1) + S_K(t2) - S_K(t1 + t2)``.
    """
    ts = [r.t for r in table.rows if r.status == "converged"]
    if pairs is None:
        pairs = [(a, b) for i, a in enumerate(ts) for b in ts[i:] if a + b <= ts[-1]]
    slack, used = [], []
    ok = True
    for a, b in pairs:
        sa, sb = interpolate_log(table, a), interpolate_log(table, b)
        sab = interpolate_log(table, a + b)
        sl = sa + sb - sab
        used.append((float(a), float(b)))
        slack.append(float(sl))
        ok &= sl >= -tol * abs(sab)
    return SubadditivityReport(used, slack, bool(ok), tol)


# ---------------------------------------------------------------------------


@dataclass
class RatioResult:
    t0: float
    S_K_const: float
    lam: float
    identity_residual: float
    surface: object = field(repr=False)
    nonpositive_field: bool = True
    evaluations: list = field(default_factory=list)
    passed: bool = False

    def to_dict(self):
        d = asdict(self)
        d.pop("surface")
        return d


def minimize_isoperimetric_ratio(fld, t_grid=None, level=5, config=None, table=None,
                                 refine_steps=12, seed=0, tol=DERIVATIVE_SLACK):
    """Minimise ``F_K(u) / V(u)^{2/3}`` over volumes on the scan grid, then refine.

    The scan picks the bracketing grid interval; golden-section search in
    log t refines it. ``identity_residual`` measures the relation between
    the multiplier and ``(2/3) S_K t0^{-1/3}``.
    """
    cfg = config or SolverConfig(seed=seed)
    kmax = float(np.max(fld.eval(sample_points(default_radii(1e3, 100), 128, seed))))
    nonpos = kmax <= 0.0
    if not nonpos:
        warnings.warn("field takes positive values on samples; ratio result is flagged", stacklevel=2)
    if table is None:
        table = scan_isovolumetric(fld, t_grid, level, cfg, seed=seed)
    mesh = cached_mesh(table.meta.get("level", level))
    rows = [r for r in table.rows if r.status == "converged" and r.t > 0]
    if not rows:
        raise ValueError("no converged positive-volume rows in the scan")
    ratio = np.array([r.capillary_F / r.t ** (2.0 / 3.0) for r in rows])
    i = int(np.argmin(ratio))
    evals = {}

    def objective(x):
        t = float(np.exp(x))
        res = minimize_isovolumetric(mesh, fld, t, cfg)
        evals[x] = res
        return res.breakdown.capillary_F / t ** (2.0 / 3.0)

    lo = np.log(rows[max(i - 1, 0)].t)
    hi = np.log(rows[min(i + 1, len(rows) - 1)].t)
    if hi > lo:
        g = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - g * (b - a), a + g * (b - a)
        fc, fd = objective(c), objective(d)
        for _ in range(refine_steps):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = objective(c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = objective(d)
        xbest = c if fc <= fd else d
        best = evals[xbest]
        value = min(fc, fd)
        if value > ratio[i]:
            best, value = None, ratio[i]
    else:
        best, value = None, ratio[i]
    if best is None:
        best = minimize_isovolumetric(mesh, fld, rows[i].t, cfg)
    t0 = best.t
    lam = best.lam
    pred = 2.0 / 3.0 * value * t0 ** (-1.0 / 3.0)
    resid = abs(lam - pred) / abs(lam)
    return RatioResult(
        t0=float(t0),
        S_K_const=float(value),
        lam=float(lam),
        identity_residual=float(resid),
        surface=best.surface,
        nonpositive_field=bool(nonpos),
        evaluations=sorted((float(np.exp(x)), float(r.breakdown.capillary_F / np.exp(x) ** (2 / 3)))
                           for x, r in evals.items()),
        passed=bool(resid <= tol),
    )
