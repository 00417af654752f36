"""Discrete Dirichlet, area, volume and anisotropy functionals on surface maps.

All gradients are exact derivatives of the discrete functionals (not
discretisations of the continuum first variations), so they pass
finite-difference checks to rounding.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .anisotropy import DEFAULT_NODES, mK_and_grad, eval_mK, sample_points, default_radii
from .spheremesh import face_area_vectors

ISO_CONSTANT = (36.0 * np.pi) ** (1.0 / 3.0)


def _scatter(faces, per_corner, n):
    """Sum (m, 3, 3) per-corner vectors into (n, 3) vertex vectors."""
    out = np.zeros((n, 3))
    for k in range(3):
        for d in range(3):
            out[:, d] += np.bincount(faces[:, k], per_corner[:, k, d], n)
    return out


def dirichlet(u):
    """Half the integral of |grad u|^2: ``0.5 * sum_e w_e |u_i - u_j|^2``."""
    e = u.mesh.edges
    d = u.positions[e[:, 0]] - u.positions[e[:, 1]]
    return 0.5 * float(u.mesh.cotan_weights @ np.einsum("ij,ij->i", d, d))


def grad_dirichlet(u):
    return np.asarray(u.mesh.stiffness @ u.positions)


def area(u):
    """Total area of the image polyhedron."""
    av = face_area_vectors(u.positions, u.mesh.faces)
    return float(np.linalg.norm(av, axis=1).sum())


def volume(u):
    """Signed enclosed volume ``(1/6) sum_f u_i . (u_j x u_k)``.

    Computed relative to the vertex mean, which makes translation invariance
    hold to rounding rather than to cancellation error.
    """
    x = u.positions - u.positions.mean(axis=0)
    f = u.mesh.faces
    return float(np.einsum("ij,ij->", x[f[:, 0]], np.cross(x[f[:, 1]], x[f[:, 2]])) / 6.0)


def grad_volume(u):
    """Vertex gradient ``(1/6) sum_{f ∋ i} u_j x u_k`` (cyclic order)."""
    x = u.positions - u.positions.mean(axis=0)
    f = u.mesh.faces
    a, b, c = x[f[:, 0]], x[f[:, 1]], x[f[:, 2]]
    corner = np.stack([np.cross(b, c), np.cross(c, a), np.cross(a, b)], axis=1) / 6.0
    return _scatter(f, corner, u.mesh.n_vertices)


def q_term(u, fld, scale=1.0, nodes=DEFAULT_NODES):
    """Centroid rule for ``int Q_K(scale * u) . u_x ^ u_y``.

    With ``scale = 1`` this is the anisotropy term Q(u); in general it is the
    rescaled Q_t(u), and ``q_term(t*u, K, 1) == t**2 * q_term(u, K, t)``.
    """
    f = u.mesh.faces
    x = u.positions
    c = x[f].mean(axis=1)
    n = face_area_vectors(x, f)
    p = scale * c
    m = eval_mK(fld, p, nodes)
    return float(np.einsum("i,ij,ij->", m, p, n))


def grad_q(u, fld, nodes=DEFAULT_NODES):
    """Exact vertex gradient of :func:`q_term` at ``scale = 1``."""
    f = u.mesh.faces
    x = u.positions
    a, b, cc = x[f[:, 0]], x[f[:, 1]], x[f[:, 2]]
    c = (a + b + cc) / 3.0
    n = 0.5 * np.cross(b - a, cc - a)
    m, gm = mK_and_grad(fld, c, nodes)
    q = m[:, None] * c
    # J^T n with J = m I + c gm^T
    jt_n = m[:, None] * n + gm * np.einsum("ij,ij->i", c, n)[:, None]
    corner = np.stack(
        [0.5 * np.cross(q, cc - b), 0.5 * np.cross(q, a - cc), 0.5 * np.cross(q, b - a)],
        axis=1,
    )
    corner += jt_n[:, None, :] / 3.0
    return _scatter(f, corner, u.mesh.n_vertices)


def grad_energy(u, fld, nodes=DEFAULT_NODES):
    g = grad_dirichlet(u)
    if fld.label != "zero":
        g = g + grad_q(u, fld, nodes)
    return g


def energy(u, fld, nodes=DEFAULT_NODES):
    """E(u) = D(u) + Q(u)."""
    e = dirichlet(u)
    if fld.label != "zero":
        e += q_term(u, fld, 1.0, nodes)
    return e


def _dual_inner(u, a, b):
    return float(np.einsum("ij,ij,i->", a, b, 1.0 / u.mesh.dual_areas))


def el_residual(u, fld, lam, nodes=DEFAULT_NODES, grads=None):
    """Lumped-mass-inverse norm of ``grad E - lam * grad V``.

    Vertex gradients are integrated forces, so dividing by the dual area
    before squaring gives the L2 norm of the pointwise residual of
    ``-Laplace u + (K(u) - lam) u_x ^ u_y``.
    """
    ge, gv = grads if grads is not None else (grad_energy(u, fld, nodes), grad_volume(u))
    r = ge - lam * gv
    return float(np.sqrt(_dual_inner(u, r, r)))


class UndefinedMultiplierError(ValueError):
    """The volume gradient vanishes, so no multiplier can be fitted."""


def extract_multiplier(u, fld, nodes=DEFAULT_NODES, grads=None):
    """Least-squares multiplier minimising :func:`el_residual` at fixed ``u``."""
    ge, gv = grads if grads is not None else (grad_energy(u, fld, nodes), grad_volume(u))
    den = _dual_inner(u, gv, gv)
    scale = np.abs(u.positions - u.positions.mean(axis=0)).max()
    if den <= 1e-28 * max(scale, 1.0) ** 4 or scale == 0.0:
        raise UndefinedMultiplierError("volume gradient vanishes (constant map)")
    return _dual_inner(u, ge, gv) / den


def _singular_values_sq(u):
    """Sum and product of squared singular values of each face map."""
    f = u.mesh.faces
    X = u.mesh.vertices
    x = u.positions
    e1, e2 = X[f[:, 1]] - X[f[:, 0]], X[f[:, 2]] - X[f[:, 0]]
    f1, f2 = x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]]
    g0 = np.stack([np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e1, e2),
                   np.einsum("ij,ij->i", e2, e2)], axis=1)
    g1 = np.stack([np.einsum("ij,ij->i", f1, f1), np.einsum("ij,ij->i", f1, f2),
                   np.einsum("ij,ij->i", f2, f2)], axis=1)
    det0 = g0[:, 0] * g0[:, 2] - g0[:, 1] ** 2
    det1 = np.maximum(g1[:, 0] * g1[:, 2] - g1[:, 1] ** 2, 0.0)
    tr = (g0[:, 2] * g1[:, 0] - 2.0 * g0[:, 1] * g1[:, 1] + g0[:, 0] * g1[:, 2]) / det0
    return tr, det1 / det0


def conformality_defect(u):
    """Reference-area average of ``(s1 - s2)^2 / (s1^2 + s2^2)`` per face.

    ``s1, s2`` are the singular values of the affine face map; the per-face
    value is 0 exactly when the image metric is a multiple of the reference
    metric. Scale invariant, in [0, 1].
    """
    tr, det = _singular_values_sq(u)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(tr > 0, (tr - 2.0 * np.sqrt(det)) / tr, 0.0)
    d = np.clip(d, 0.0, 1.0)
    w = u.mesh.face_areas
    return float(w @ d / w.sum())


def radial_q_derivative(u, fld, s, nodes=DEFAULT_NODES):
    """``s^2 sum_f K(s c_f) c_f . N_f``: the derivative of s -> Q(s u)."""
    f = u.mesh.faces
    x = u.positions
    c = x[f].mean(axis=1)
    n = face_area_vectors(x, f)
    if s == 0.0:
        return 0.0
    return float(s**2 * np.einsum("i,ij,ij->", fld.eval(s * c), c, n))


@dataclass
class EnergyBreakdown:
    dirichlet: float
    area: float
    volume: float
    q_term: float
    energy_E: float
    capillary_F: float
    conformality_defect: float

    def to_json(self, **kw):
        return json.dumps(asdict(self), **kw)


def breakdown(u, fld, nodes=DEFAULT_NODES):
    d = dirichlet(u)
    a = area(u)
    q = q_term(u, fld, 1.0, nodes) if fld.label != "zero" else 0.0
    return EnergyBreakdown(
        dirichlet=d,
        area=a,
        volume=volume(u),
        q_term=q,
        energy_E=d + q,
        capillary_F=a + q,
        conformality_defect=conformality_defect(u),
    )


def sampled_sup_K(fld, seed=0, n_dirs=256, r_max=1e3):
    pts = sample_points(default_radii(r_max), n_dirs, seed)
    return float(np.abs(fld.eval(pts)).max())


def sampled_sup_Q(fld, seed=0, n_dirs=256, r_max=1e3, nodes=DEFAULT_NODES):
    pts = sample_points(default_radii(r_max), n_dirs, seed)
    return max(float((np.abs(eval_mK(fld, row, nodes)) * np.linalg.norm(row, axis=-1)).max())
               for row in pts)


@dataclass
class SteffenCheck:
    holds: bool
    q_t: float
    steffen_bound: float
    steffen_slack: float
    q: float
    sup_bound: float
    sup_slack: float


def steffen_bound_check(u, fld, t, seed=0, tol=1e-9):
    """Check ``|Q_t(u)| <= ||K_t||_inf S^{-3/2} D(u)^{3/2}`` with K_t(p) = t K(tp).

    Also checks ``|Q(u)| <= ||Q_K||_inf D(u)``. Sup norms are sampled.
    """
    d = dirichlet(u)
    qt = q_term(u, fld, t)
    kt_sup = abs(t) * sampled_sup_K(fld, seed)
    bound = kt_sup / ISO_CONSTANT**1.5 * d**1.5
    q = q_term(u, fld, 1.0)
    sup_bound = sampled_sup_Q(fld, seed) * d
    s1 = bound - abs(qt)
    s2 = sup_bound - abs(q)
    return SteffenCheck(
        holds=bool(s1 >= -tol and s2 >= -tol),
        q_t=qt, steffen_bound=bound, steffen_slack=s1,
        q=q, sup_bound=sup_bound, sup_slack=s2,
    )
