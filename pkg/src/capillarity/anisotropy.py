"""Prescribed scalar fields K, the radial vector potential Q_K with div Q_K = K,
sampling checks of the growth conditions, and ball integrals of K."""

from __future__ import annotations

import functools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

DEFAULT_NODES = 16

# (K4) threshold: 2**(2/3) * (2 + k) < (2 - k)**2
_C = 2.0 ** (2.0 / 3.0)


@functools.lru_cache(maxsize=None)
def gauss_legendre_unit(n):
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# builtin families; each takes points of shape (..., 3)


def _zero_K(p):
    return np.zeros(np.shape(p)[:-1])


def _zero_grad(p):
    return np.zeros(np.shape(p))


def _sq(p):
    return p[..., 0] ** 2 + p[..., 1] ** 2 + p[..., 2] ** 2


def _well_K(p, a, center):
    return -a / (1.0 + _sq(p - center))


def _well_grad(p, a, center):
    d = p - center
    s = 1.0 + _sq(d)
    return (2.0 * a / s**2)[..., None] * d


def _cone_K(p, a, beta, axis):
    s = 1.0 + _sq(p)
    num = p @ axis - beta * np.sqrt(s)
    return -a * num * s**-1.5


def _cone_grad(p, a, beta, axis):
    s = 1.0 + _sq(p)
    rho = np.sqrt(s)
    num = p @ axis - beta * rho
    dnum = axis - (beta / rho)[..., None] * p
    return -a * (dnum * (s**-1.5)[..., None] - (3.0 * num * s**-2.5)[..., None] * p)


@dataclass(frozen=True)
class AnisotropyField:
    """Scalar field K on R^3 with its gradient.

    ``eval`` and ``grad`` are vectorised over leading axes: points of shape
    ``(..., 3)`` map to ``(...)`` and ``(..., 3)``.
    """

    eval: Callable = field(repr=False, compare=False)
    grad: Callable = field(repr=False, compare=False)
    label: str = "custom"
    params: dict = field(default_factory=dict)
    claimed_k0: float | None = None

    def __call__(self, p):
        return self.eval(np.asarray(p, dtype=float))

    def gradient(self, p):
        return self.grad(np.asarray(p, dtype=float))

    def negated(self):
        """The field -K (same family, flipped ``sign`` parameter)."""
        params = dict(self.params)
        params["sign"] = -params.get("sign", 1.0)
        if self.label in BUILTIN_FIELDS:
            return make_field(self.label, **params)
        return AnisotropyField(
            functools.partial(_negate_call, self.eval),
            functools.partial(_negate_call, self.grad),
            self.label,
            params,
            self.claimed_k0,
        )

    def to_dict(self):
        return {"label": self.label, "params": _jsonable(self.params)}


def _negate_call(fn, p):
    return -fn(p)


def _jsonable(params):
    out = {}
    for k, v in params.items():
        out[k] = np.asarray(v).tolist() if isinstance(v, (np.ndarray, tuple, list)) else v
    return out


def zero_field(sign=1.0):
    return AnisotropyField(_zero_K, _zero_grad, "zero", {"sign": sign}, 0.0)


def radial_well(a=0.5, sign=1.0):
    """K(p) = -a / (1 + |p|^2); sup |K(p) p| = a/2."""
    return shifted_well(a, (0.0, 0.0, 0.0), sign, _label="radial_well")


def shifted_well(a=0.5, center=(0.0, 0.0, 0.0), sign=1.0, _label="shifted_well"):
    """K(p) = -a / (1 + |p - center|^2)."""
    center = np.asarray(center, dtype=float)
    ev = functools.partial(_well_K, a=float(a), center=center)
    gr = functools.partial(_well_grad, a=float(a), center=center)
    if sign != 1.0:
        ev, gr = functools.partial(_scale, ev, sign), functools.partial(_scale, gr, sign)
    params = {"a": float(a), "sign": float(sign)}
    if _label != "radial_well":
        params["center"] = tuple(center.tolist())
    k0 = abs(a) / 2.0 if not center.any() else None
    return AnisotropyField(ev, gr, _label, params, k0)


def cone_sign(a=0.5, beta=0.5, axis=(0.0, 0.0, 1.0), sign=1.0):
    """K(p) = -a (p.e - beta sqrt(1+|p|^2)) / (1+|p|^2)^{3/2}.

    Far from the origin K is negative inside the cone ``angle(p, e) <
    arccos(beta)`` and positive outside it.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    ev = functools.partial(_cone_K, a=float(a), beta=float(beta), axis=axis)
    gr = functools.partial(_cone_grad, a=float(a), beta=float(beta), axis=axis)
    if sign != 1.0:
        ev, gr = functools.partial(_scale, ev, sign), functools.partial(_scale, gr, sign)
    params = {"a": float(a), "beta": float(beta), "axis": tuple(axis.tolist()), "sign": float(sign)}
    return AnisotropyField(ev, gr, "cone_sign", params, None)


def _scale(fn, factor, p):
    return factor * fn(p)


BUILTIN_FIELDS = {
    "zero": zero_field,
    "radial_well": radial_well,
    "shifted_well": shifted_well,
    "cone_sign": cone_sign,
}


def make_field(label, **params):
    """Instantiate a builtin field family by name."""
    try:
        factory = BUILTIN_FIELDS[label]
    except KeyError:
        raise ValueError(f"unknown field {label!r}; choose from {sorted(BUILTIN_FIELDS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# radial potential


def _radial_rule(p, nodes):
    """Per-point nodes and weights on [0, 1] for integrands in ``s -> K(s p)``.

    Geometric panels ``[0, 1/|p|], [1/|p|, 2/|p|], ...`` each carry ``nodes``
    Gauss-Legendre points, which keeps the rule accurate when K varies on a
    unit length scale and |p| is large. Panels collapsed at s = 1 get zero
    weight, so the rule for one point does not depend on the rest of the batch.
    Returns arrays of shape ``(..., M)``.
    """
    if nodes < 4:
        raise ValueError("need at least 4 quadrature nodes")
    x, w = gauss_legendre_unit(nodes)
    r = np.linalg.norm(p, axis=-1)
    rmax = float(r.max()) if r.size else 0.0
    n_pan = 1 + (int(np.ceil(np.log2(rmax))) if rmax > 1.0 else 0)
    r0 = 1.0 / np.maximum(r, 1.0)
    j = np.arange(n_pan)
    hi = np.minimum(1.0, r0[..., None] * 2.0**j)
    hi[..., -1] = 1.0
    lo = np.concatenate([np.zeros(hi.shape[:-1] + (1,)), hi[..., :-1]], axis=-1)
    ln = (hi - lo)[..., None]
    s = (lo[..., None] + ln * x).reshape(r.shape + (-1,))
    wt = (ln * w).reshape(r.shape + (-1,))
    return s, wt


def mK_and_grad(fld, p, nodes=DEFAULT_NODES, want_grad=True):
    """``m_K(p)`` and ``grad m_K(p) = int_0^1 grad K(s p) s^3 ds`` in one pass."""
    p = np.asarray(p, dtype=float)
    s, w = _radial_rule(p, nodes)
    sp = s[..., None] * p[..., None, :]
    ws = w * s**2
    m = (ws * fld.eval(sp)).sum(axis=-1)
    if not want_grad:
        return m, None
    gm = np.matmul((ws * s)[..., None, :], fld.grad(sp))[..., 0, :]
    return m, gm


def eval_mK(fld, p, nodes=DEFAULT_NODES):
    """m_K(p) = int_0^1 K(s p) s^2 ds by composite Gauss-Legendre quadrature."""
    return mK_and_grad(fld, p, nodes, want_grad=False)[0]


def eval_QK(fld, p, nodes=DEFAULT_NODES):
    """Q_K(p) = m_K(p) p, a field with divergence K."""
    p = np.asarray(p, dtype=float)
    return eval_mK(fld, p, nodes)[..., None] * p


def jacobian_QK(fld, p, nodes=DEFAULT_NODES):
    """dQ_K/dp = m_K(p) I + p (grad m_K(p))^T, shape (..., 3, 3).

    The trace equals ``3 m_K + p . grad m_K = K(p)`` up to quadrature error.
    """
    p = np.asarray(p, dtype=float)
    m, gm = mK_and_grad(fld, p, nodes)
    return m[..., None, None] * np.eye(3) + p[..., :, None] * gm[..., None, :]


def eval_G0(fld, p):
    """K(p) p."""
    p = np.asarray(p, dtype=float)
    return fld.eval(p)[..., None] * p


def eval_G1(fld, p):
    """(grad K(p) . p) p."""
    p = np.asarray(p, dtype=float)
    return np.einsum("...i,...i->...", fld.grad(p), p)[..., None] * p


# ---------------------------------------------------------------------------
# condition checks


def k4_holds(k0):
    return _C * (2.0 + k0) < (2.0 - k0) ** 2


@dataclass
class FieldCheckReport:
    """Sampled suprema for the growth conditions on K.

    Every estimate is a maximum over the sample set recorded in ``samples``;
    nothing here is a proof.
    """

    label: str
    k0_estimate: float
    k2_decay: list
    k2_holds: bool
    k3_estimate: float
    k4_holds: bool
    q_sup: float
    k_sup: float
    samples: dict

    @property
    def k1_holds(self):
        return self.k0_estimate < 2.0

    @property
    def k3_holds(self):
        return self.k3_estimate < 2.0

    def to_json(self, **kw):
        d = asdict(self)
        d["k1_holds"] = self.k1_holds
        d["k3_holds"] = self.k3_holds
        return json.dumps(d, **kw)


def sample_points(radii, n_dirs, seed, center=None):
    """Random directions times the radius list; returns (len(radii), n_dirs, 3)."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_dirs, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.asarray(radii, dtype=float)[:, None, None] * dirs[None, :, :]
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts


def default_radii(r_max=1e3, n=200):
    return np.concatenate([[0.0], np.geomspace(1e-3, r_max, n - 1)])


def check_conditions(fld, radii=None, n_dirs=256, seed=0, nodes=DEFAULT_NODES,
                     tail_radii=(1e1, 1e2, 1e3)):
    """Estimate k0 for (K1), the decay (K2), k3 for (K3) and evaluate (K4).

    (K2) is accepted when ``max |K(p) p|`` over directions is non-increasing
    along ``tail_radii`` and its last value is below a hundredth of ``k0``.
    """
    radii = default_radii() if radii is None else np.asarray(radii, dtype=float)
    if radii.max() < 1e2:
        raise ValueError("the (K2) decay check needs radii up to at least 1e2")
    pts = sample_points(radii, n_dirs, seed)
    norms = np.linalg.norm(pts, axis=-1)
    kv = fld.eval(pts)
    k1 = np.abs(kv) * norms
    k3 = np.abs(np.einsum("...i,...i->...", fld.grad(pts), pts)) * norms
    q = np.concatenate([np.linalg.norm(eval_QK(fld, row, nodes), axis=-1) for row in pts])
    k0 = float(k1.max())

    tail_pts = sample_points(tail_radii, n_dirs, seed)
    tail = (np.abs(fld.eval(tail_pts)) * np.linalg.norm(tail_pts, axis=-1)).max(axis=1)
    decay = [float(v) for v in tail]
    k2 = bool(np.all(np.diff(tail) <= 1e-15) and (tail[-1] <= 1e-2 * max(k0, 1e-300) or k0 == 0.0))

    return FieldCheckReport(
        label=fld.label,
        k0_estimate=k0,
        k2_decay=decay,
        k2_holds=k2,
        k3_estimate=float(k3.max()),
        k4_holds=bool(k4_holds(k0)),
        q_sup=float(q.max()),
        k_sup=float(np.abs(kv).max()),
        samples={
            "n_radii": int(len(radii)),
            "r_max": float(radii.max()),
            "n_dirs": int(n_dirs),
            "seed": int(seed),
            "tail_radii": [float(r) for r in tail_radii],
        },
    )


# ---------------------------------------------------------------------------
# ball integrals


@functools.lru_cache(maxsize=8)
def _ball_rule(n_radial, n_polar, n_azimuth):
    """Unit-ball product rule: (points (N, 3), weights (N,))."""
    r, wr = gauss_legendre_unit(n_radial)
    ct, wt = np.polynomial.legendre.leggauss(n_polar)
    ph = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    wp = np.full(n_azimuth, 2.0 * np.pi / n_azimuth)
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack(
        [st[:, None] * np.cos(ph)[None, :], st[:, None] * np.sin(ph)[None, :],
         np.broadcast_to(ct[:, None], (n_polar, n_azimuth))],
        axis=-1,
    ).reshape(-1, 3)
    wdir = (wt[:, None] * wp[None, :]).reshape(-1)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = ((wr * r**2)[:, None] * wdir[None, :]).reshape(-1)
    return pts, w, dirs


@dataclass(frozen=True)
class BallGrid:
    n_radial: int = 32
    n_polar: int = 32
    n_azimuth: int = 64


def ball_integral(fld, center, radius, grid=BallGrid()):
    """Integral of K over the ball B_radius(center).

    Radial Gauss-Legendre times a Gauss(cos theta) x trapezoid(phi) angular
    rule; spectrally accurate for smooth K.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts, w, _ = _ball_rule(grid.n_radial, grid.n_polar, grid.n_azimuth)
    vals = fld.eval(np.asarray(center, dtype=float) + radius * pts)
    return float(radius**3 * (w @ vals))


def _ball_samples(center, radius, n_shells=8, n_dirs=(8, 16)):
    """Center, interior shells and the bounding sphere of a ball."""
    _, _, dirs = _ball_rule(4, n_dirs[0], n_dirs[1])
    shells = np.linspace(radius / n_shells, radius, n_shells)
    pts = (shells[:, None, None] * dirs[None]).reshape(-1, 3)
    return np.vstack([np.zeros((1, 3)), pts]) + np.asarray(center, dtype=float)


def _qualifying_radii(fld, centers, radii, sign):
    """Radii for which some center has sign*K <= 0 on the ball, < 0 somewhere."""
    out = []
    for r in radii:
        pts = _ball_samples(np.zeros(3), r)
        vals = sign * fld.eval(centers[:, None, :] + pts[None, :, :])
        ok = (vals.max(axis=1) <= 0.0) & (vals.min(axis=1) < 0.0)
        if ok.any():
            out.append(float(r))
    return out


def _estimate_t(fld, centers, radii, sign):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.sort(np.atleast_1d(np.asarray(radii, dtype=float)))
    if centers.size == 0 or radii.size == 0:
        raise ValueError("center and radius grids must be nonempty")
    good = _qualifying_radii(fld, centers, radii, sign)
    if not good:
        return 0.0
    best = max(good)
    if best == radii[-1]:
        return np.inf
    return 4.0 * np.pi * best**3 / 3.0


def estimate_t_plus(fld, centers, radii):
    """Largest searched ball volume on which K <= 0 and K is not identically 0.

    Returns ``inf`` when the largest searched radius qualifies, ``0`` when no
    ball does.
    """
    return _estimate_t(fld, centers, radii, 1.0)


def estimate_t_minus(fld, centers, radii):
    """Negative counterpart of :func:`estimate_t_plus` (K >= 0 balls)."""
    return -_estimate_t(fld, centers, radii, -1.0)


def default_center_grid(extent=4.0, n=9):
    g = np.linspace(-extent, extent, n)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def best_trial_center(fld, t, centers=None, grid=BallGrid(8, 8, 16), refine=6):
    """Center minimising sign(t) * int_B K over balls of volume |t|.

    This is the sphere trial that lowers the energy most: an outward sphere
    of volume t > 0 has anisotropy term int_B K.
    """
    centers = default_center_grid() if centers is None else np.atleast_2d(centers)
    r = (3.0 * abs(t) / (4.0 * np.pi)) ** (1.0 / 3.0)
    sgn = np.sign(t)
    vals = np.array([sgn * ball_integral(fld, c, r, grid) for c in centers])
    # the coarse rule misses unit-scale features inside large balls: rescore
    # the leaders and the origin with a radial count that grows with r
    keep = np.argsort(vals)[:refine]
    cand = np.vstack([np.zeros((1, 3)), np.asarray(centers, dtype=float)[keep]])
    fine = BallGrid(max(32, int(np.ceil(4.0 * r))), 32, 64)
    scores = np.array([sgn * ball_integral(fld, c, r, fine) for c in cand])
    i = int(np.argmin(scores))
    if scores[i] >= 0.0:
        return np.zeros(3)
    return cand[i]
