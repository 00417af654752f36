"""Reference icosphere and piecewise-linear surface maps defined on it."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg
from scipy.spatial import cKDTree

MAX_LEVEL = 8
COT_CLAMP = 1e6
DEGENERATE_AREA_RATIO = 1e-14


class MeshDegeneracyError(ValueError):
    """A triangle collapsed to (numerically) zero area."""


class ResourceError(ValueError):
    """Requested mesh exceeds the resource guard."""


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v, f


def _subdivide(v, f):
    """One 1-to-4 split with midpoints projected back to the unit sphere."""
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(f)
    m01 = inverse[:nf] + len(v)
    m12 = inverse[nf:2 * nf] + len(v)
    m20 = inverse[2 * nf:] + len(v)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new_f = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.vstack([v, mid]), new_f


def face_area_vectors(x, faces):
    """Half cross products: the integral of u_x ^ u_y over each flat triangle."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    return 0.5 * np.cross(b - a, c - a)


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Triangulated unit sphere used as the parameter domain.

    Attributes
    ----------
    vertices : (n, 3) ndarray
        Unit vectors.
    faces : (m, 3) int ndarray
        Counter-clockwise seen from outside, so an outward embedding has
        positive volume.
    edges : (e, 2) int ndarray
        Unique undirected edges, ``edges[:, 0] < edges[:, 1]``.
    cotan_weights : (e,) ndarray
        ``(cot alpha + cot beta) / 2`` on the reference polyhedron.
    dual_areas : (n,) ndarray
        Barycentric (one third) vertex areas on the reference polyhedron.
    level : int
        Subdivision depth.
    """

    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    cotan_weights: np.ndarray
    dual_areas: np.ndarray
    level: int
    face_areas: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @cached_property
    def stiffness(self):
        """Cotangent stiffness matrix L with D(u) = 0.5 * tr(u^T L u)."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.cotan_weights
        n = self.n_vertices
        off = sparse.coo_matrix(
            (np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        diag = np.bincount(i, w, n) + np.bincount(j, w, n)
        return (off + sparse.diags(diag)).tocsc()

    @cached_property
    def mean_weights(self):
        """Dual-area weights normalised to sum to one (vertex average)."""
        return self.dual_areas / self.dual_areas.sum()

    @cached_property
    def riesz_factor(self):
        """Sparse LU of the bordered system for the H^1 Riesz map.

        The inner product is ``<u, v> = u^T L v + (a.u)(a.v)`` with ``a`` the
        normalised dual areas, the discrete analogue of the gradient pairing
        plus product of means.
        """
        a = self.mean_weights
        border = sparse.csc_matrix(a.reshape(-1, 1))
        kkt = sparse.bmat([[self.stiffness, border], [border.T, None]], format="csc")
        return sparse_linalg.splu(kkt)

    def riesz(self, g, mean_scale=1.0):
        """Solve ``(L + a a^T / mean_scale) x = g`` for (n, 3) right-hand sides.

        ``mean_scale`` stretches the translation component of the result.
        """
        g = np.asarray(g, dtype=float)
        total = mean_scale * g.sum(axis=0)
        rhs = np.vstack([g, total[None, :]])
        sol = self.riesz_factor.solve(rhs)
        return sol[:-1]

    @cached_property
    def reflection_permutation(self):
        """Index of the mirror image (x -> -x) of every reference vertex."""
        mirrored = self.vertices * np.array([-1.0, 1.0, 1.0])
        dist, perm = cKDTree(self.vertices).query(mirrored)
        if dist.max() > 1e-9:
            raise RuntimeError("reference mesh is not mirror symmetric")
        perm.setflags(write=False)
        return perm


def _cotangents(x, faces):
    """Cotangent of the angle at each corner, shape (m, 3)."""
    cots = np.empty(faces.shape, dtype=float)
    for k in range(3):
        p = x[faces[:, k]]
        q = x[faces[:, (k + 1) % 3]]
        r = x[faces[:, (k + 2) % 3]]
        e1, e2 = q - p, r - p
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        dot = np.einsum("ij,ij->i", e1, e2)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, k] = dot / cross
    return np.clip(np.nan_to_num(cots, nan=0.0, posinf=COT_CLAMP, neginf=-COT_CLAMP),
                   -COT_CLAMP, COT_CLAMP)


def build_icosphere(level=4):
    """Geodesic icosphere by repeated 1-to-4 subdivision of the icosahedron.

    Parameters
    ----------
    level : int
        Number of subdivisions; the mesh has ``10 * 4**level + 2`` vertices.

    Raises
    ------
    ResourceError
        If ``level`` exceeds ``MAX_LEVEL``.
    """
    level = int(level)
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > MAX_LEVEL:
        raise ResourceError(f"level {level} exceeds the guard {MAX_LEVEL}")
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)

    areas = np.linalg.norm(face_area_vectors(v, f), axis=1)
    if areas.min() < DEGENERATE_AREA_RATIO * areas.mean():
        raise MeshDegeneracyError("reference mesh has a degenerate triangle")

    cots = _cotangents(v, f)
    # corner k is opposite the edge (k+1, k+2)
    opp = np.concatenate([f[:, [1, 2]], f[:, [2, 0]], f[:, [0, 1]]])
    opp_cot = np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    opp.sort(axis=1)
    edges, inverse = np.unique(opp, axis=0, return_inverse=True)
    weights = 0.5 * np.bincount(inverse.reshape(-1), opp_cot, len(edges))

    dual = np.zeros(len(v))
    for k in range(3):
        dual += np.bincount(f[:, k], areas / 3.0, len(v))

    for arr in (v, f, edges, weights, dual, areas):
        arr.setflags(write=False)
    return SphereMesh(v, f, edges, weights, dual, level, areas)


@dataclass(frozen=True, eq=False)
class SurfaceMap:
    """Values of a map u: S^2 -> R^3 at the reference vertices."""

    positions: np.ndarray
    mesh: SphereMesh

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (self.mesh.n_vertices, 3):
            raise ValueError(
                f"expected positions of shape {(self.mesh.n_vertices, 3)}, got {pos.shape}"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    def with_positions(self, positions):
        return SurfaceMap(positions, self.mesh)

    def centroid(self):
        """Dual-area-weighted average of the vertex values."""
        return self.mesh.mean_weights @ self.positions

    def scaled(self, factor, about=None):
        about = np.zeros(3) if about is None else np.asarray(about, dtype=float)
        return self.with_positions(about + factor * (self.positions - about))

    def translated(self, shift):
        return self.with_positions(self.positions + np.asarray(shift, dtype=float))


def signed_volume(x, faces):
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    return np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0


def init_sphere(mesh, t, center=(0.0, 0.0, 0.0)):
    """Round sphere enclosing signed volume ``t`` about ``center``.

    Negative ``t`` gives the mirrored (orientation reversed) parametrisation.
    The result is rescaled about ``center`` so its discrete volume equals
    ``t`` to rounding.
    """
    t = float(t)
    if t == 0.0 or not np.isfinite(t):
        raise ValueError("init_sphere needs a finite nonzero volume")
    center = np.asarray(center, dtype=float)
    r = (3.0 * abs(t) / (4.0 * np.pi)) ** (1.0 / 3.0)
    x = r * np.asarray(mesh.vertices)
    u = SurfaceMap(center + x, mesh)
    if t < 0:
        u = flip_orientation(u)
    vol = signed_volume(u.positions - center, mesh.faces)
    return u.scaled(np.cbrt(t / vol), about=center)


def flip_orientation(u):
    """Compose ``u`` with the reflection x -> -x of the reference sphere.

    Dirichlet energy is unchanged, volume and anisotropy term change sign.
    """
    perm = u.mesh.reflection_permutation
    return u.with_positions(u.positions[perm])


def rescale_to_volume(u, t, about=None):
    """Cube-root rescale so that the discrete volume equals ``t``."""
    about = u.centroid() if about is None else np.asarray(about, dtype=float)
    vol = signed_volume(u.positions - about, u.mesh.faces)
    if vol == 0.0 or np.sign(vol) != np.sign(t):
        raise MeshDegeneracyError("cannot rescale: volume has the wrong sign or vanishes")
    return u.scaled(np.cbrt(t / vol), about=about)


def vertex_normals(x, faces, n):
    nf = face_area_vectors(x, faces)
    out = np.zeros((n, 3))
    for k in range(3):
        np.add.at(out, faces[:, k], nf)
    return out


def tangential_smooth(u, strength=0.5):
    """Move vertices tangentially toward the area-weighted neighbour centroid.

    The displacement is projected on the local tangent plane (area-weighted
    vertex normal), scaled by ``strength``, then the enclosed volume is
    restored by a cube-root rescale about the centroid.

    Raises
    ------
    MeshDegeneracyError
        If an image triangle has (relative) zero area.
    """
    strength = float(strength)
    if not np.isfinite(strength):
        raise ValueError("strength must be finite")
    if strength == 0.0:
        return u
    mesh = u.mesh
    x = u.positions
    f = mesh.faces
    av = face_area_vectors(x, f)
    areas = np.linalg.norm(av, axis=1)
    if areas.min() < DEGENERATE_AREA_RATIO * max(areas.mean(), np.finfo(float).tiny):
        raise MeshDegeneracyError("image triangle with zero area")

    n = mesh.n_vertices
    cent = x[f].mean(axis=1) * areas[:, None]
    acc = np.zeros((n, 3))
    wsum = np.zeros(n)
    for k in range(3):
        np.add.at(acc, f[:, k], cent)
        wsum += np.bincount(f[:, k], areas, n)
    target = acc / wsum[:, None]
    normals = vertex_normals(x, f, n)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    d = target - x
    d -= np.einsum("ij,ij->i", d, normals)[:, None] * normals
    vol = signed_volume(x - u.centroid(), f)
    moved = u.with_positions(x + strength * d)
    return rescale_to_volume(moved, vol)


def write_obj(u, path):
    """ASCII Wavefront OBJ with one ``v`` record per vertex and ``f`` per face."""
    path = Path(path)
    lines = [f"# {u.mesh.n_vertices} vertices, {u.mesh.n_faces} faces"]
    lines += [f"v {p[0]!r} {p[1]!r} {p[2]!r}" for p in u.positions.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in u.mesh.faces.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_obj(path, mesh):
    """Read vertex positions written by :func:`write_obj` back onto ``mesh``."""
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(s) for s in line.split()[1:4]])
        elif line.startswith("f "):
            faces.append([int(s.split("/")[0]) - 1 for s in line.split()[1:4]])
    if not np.array_equal(np.asarray(faces), mesh.faces):
        raise ValueError("OBJ connectivity does not match the reference mesh")
    return SurfaceMap(np.asarray(verts), mesh)
