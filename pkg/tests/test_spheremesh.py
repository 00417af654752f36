import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capillarity import functionals as fn
from capillarity.spheremesh import (
    MAX_LEVEL,
    MeshDegeneracyError,
    ResourceError,
    SurfaceMap,
    build_icosphere,
    flip_orientation,
    init_sphere,
    read_obj,
    rescale_to_volume,
    tangential_smooth,
    write_obj,
)
from capillarity.lab.scan import cached_mesh
from capillarity.lab.surfaces import random_surfaces


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_counts(level):
    m = build_icosphere(level)
    assert m.n_vertices == 10 * 4**level + 2
    assert m.n_faces == 20 * 4**level


def test_level3_counts(mesh3):
    assert (mesh3.n_vertices, mesh3.n_faces) == (642, 1280)


@pytest.mark.parametrize("level", [0, 2, 4])
def test_unit_vertices_and_consistent_winding(level):
    m = cached_mesh(level)
    assert np.abs(np.linalg.norm(m.vertices, axis=1) - 1).max() <= 1e-12
    directed = Counter()
    for a, b, c in m.faces.tolist():
        directed.update([(a, b), (b, c), (c, a)])
    # each directed edge once, and its reverse once
    assert all(v == 1 for v in directed.values())
    assert all((b, a) in directed for a, b in directed)
    undirected = Counter(tuple(sorted(e)) for e in directed)
    assert set(undirected.values()) == {2}
    assert len(m.edges) == len(undirected)
    assert np.all(np.isfinite(m.cotan_weights))


def test_outward_winding_positive_volume(mesh3):
    assert fn.volume(SurfaceMap(mesh3.vertices, mesh3)) > 0


def test_level_guard():
    with pytest.raises(ResourceError):
        build_icosphere(MAX_LEVEL + 1)
    with pytest.raises(ValueError):
        build_icosphere(-1)


def test_reference_area_converges():
    errs = [abs(cached_mesh(lv).face_areas.sum() / (4 * math.pi) - 1) for lv in (3, 4, 5, 6)]
    assert errs[2] <= 1e-3
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    assert all(3.8 <= r <= 4.2 for r in ratios), ratios


def test_icosahedron_volume_closed_form():
    # circumradius 1: edge a = 4 / sqrt(10 + 2 sqrt 5), V = 5/12 (3 + sqrt 5) a^3
    m = build_icosphere(0)
    a = 4 / math.sqrt(10 + 2 * math.sqrt(5))
    edge = np.linalg.norm(m.vertices[m.edges[:, 0]] - m.vertices[m.edges[:, 1]], axis=1)
    assert np.allclose(edge, a, rtol=1e-14)
    v = fn.volume(SurfaceMap(m.vertices, m))
    assert v == pytest.approx(5 / 12 * (3 + math.sqrt(5)) * a**3, rel=1e-14)


@pytest.mark.parametrize("level", [0, 3, 5])
@pytest.mark.parametrize("t", [4 * math.pi / 3, -4 * math.pi / 3, 0.01, -7.5])
def test_init_sphere_volume_exact(level, t):
    u = init_sphere(cached_mesh(level), t)
    assert fn.volume(u) == pytest.approx(t, rel=1e-12)


def test_init_sphere_radius_and_center(mesh4):
    u = init_sphere(mesh4, 4 * math.pi / 3, center=(1.0, -2.0, 0.5))
    r = np.linalg.norm(u.positions - [1.0, -2.0, 0.5], axis=1)
    assert np.ptp(r) < 1e-12
    assert r[0] == pytest.approx(1.0, rel=3e-3)


def test_init_sphere_negative_is_mirror(mesh3):
    up = init_sphere(mesh3, 4 * math.pi / 3)
    un = init_sphere(mesh3, -4 * math.pi / 3)
    assert np.allclose(np.sort(np.linalg.norm(un.positions, axis=1)),
                       np.sort(np.linalg.norm(up.positions, axis=1)))
    assert fn.dirichlet(un) == pytest.approx(fn.dirichlet(up), rel=1e-13)


def test_init_sphere_zero_rejected(mesh3):
    with pytest.raises(ValueError):
        init_sphere(mesh3, 0.0)


def test_radius_two_dirichlet_converges():
    errs = [abs(fn.dirichlet(init_sphere(cached_mesh(lv), 8 * 4 * math.pi / 3)) / (16 * math.pi) - 1)
            for lv in (3, 4, 5)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


@given(seed=st.integers(0, 10_000))
def test_flip_properties(seed):
    m = cached_mesh(2)
    u = random_surfaces(m, 1, seed)[0]
    f = flip_orientation(u)
    assert fn.volume(f) == pytest.approx(-fn.volume(u), rel=1e-12)
    assert fn.dirichlet(f) == pytest.approx(fn.dirichlet(u), rel=1e-12)
    assert np.array_equal(flip_orientation(f).positions, u.positions)


def test_flip_changes_q_sign(mesh3):
    from capillarity.anisotropy import cone_sign

    u = random_surfaces(mesh3, 1, 3)[0]
    fld = cone_sign()
    assert fn.q_term(flip_orientation(u), fld) == pytest.approx(-fn.q_term(u, fld), rel=1e-10)


def test_surface_map_validation(mesh3):
    with pytest.raises(ValueError):
        SurfaceMap(np.zeros((5, 3)), mesh3)
    x = mesh3.vertices.copy()
    x[0, 0] = np.nan
    with pytest.raises(ValueError):
        SurfaceMap(x, mesh3)


class TestTangentialSmooth:
    def test_zero_strength_is_identity(self, mesh3):
        u = random_surfaces(mesh3, 1, 0)[0]
        assert tangential_smooth(u, 0.0) is u

    def test_round_icosahedron_fixed(self):
        # all vertices equivalent at level 0, so the drift cancels exactly
        m = build_icosphere(0)
        u = SurfaceMap(m.vertices, m)
        assert np.abs(tangential_smooth(u).positions - u.positions).max() <= 1e-9

    def test_round_sphere_drift_is_small(self, mesh4):
        u = SurfaceMap(mesh4.vertices, mesh4)
        assert np.abs(tangential_smooth(u).positions - u.positions).max() < 1e-2

    def test_volume_preserved_and_quality(self, mesh3, rng):
        for _ in range(5):
            u = SurfaceMap(mesh3.vertices + 0.02 * rng.normal(size=mesh3.vertices.shape), mesh3)
            v = tangential_smooth(u)
            assert fn.volume(v) == pytest.approx(fn.volume(u), rel=1e-12)
            assert _edge_ratio(v) <= 1.01 * _edge_ratio(u)
            assert _mean_min_angle(v) >= _mean_min_angle(u)

    def test_single_vertex_perturbation_decays(self, mesh3):
        x = mesh3.vertices.copy()
        tangent = np.cross(x[5], [0.0, 0.0, 1.0])
        x[5] += 0.05 * tangent / np.linalg.norm(tangent)
        base = tangential_smooth(SurfaceMap(mesh3.vertices, mesh3))
        v = tangential_smooth(SurfaceMap(x, mesh3))
        assert np.linalg.norm(v.positions[5] - base.positions[5]) < 0.05

    def test_degenerate_triangle(self, mesh3):
        x = mesh3.vertices.copy()
        a, b, c = mesh3.faces[0]
        x[c] = 0.5 * (x[a] + x[b])
        x[b] = x[a]
        with pytest.raises(MeshDegeneracyError):
            tangential_smooth(SurfaceMap(x, mesh3))

    def test_nonfinite_strength(self, mesh3):
        with pytest.raises(ValueError):
            tangential_smooth(SurfaceMap(mesh3.vertices, mesh3), float("nan"))


def _edge_ratio(u):
    e = u.mesh.edges
    length = np.linalg.norm(u.positions[e[:, 0]] - u.positions[e[:, 1]], axis=1)
    return length.max() / length.min()


def _mean_min_angle(u):
    x, f = u.positions, u.mesh.faces
    angles = []
    for k in range(3):
        a, b, c = x[f[:, k]], x[f[:, (k + 1) % 3]], x[f[:, (k + 2) % 3]]
        v1, v2 = b - a, c - a
        cos = np.einsum("ij,ij->i", v1, v2) / np.linalg.norm(v1, axis=1) / np.linalg.norm(v2, axis=1)
        angles.append(np.arccos(np.clip(cos, -1, 1)))
    return np.min(angles, axis=0).mean()


def test_rescale_wrong_sign(mesh3):
    u = SurfaceMap(mesh3.vertices, mesh3)
    with pytest.raises(MeshDegeneracyError):
        rescale_to_volume(u, -1.0)


def test_obj_round_trip(tmp_path, mesh3):
    u = random_surfaces(mesh3, 1, 7)[0]
    path = write_obj(u, tmp_path / "s.obj")
    text = path.read_text()
    assert text.count("\nv ") == mesh3.n_vertices
    assert text.count("\nf ") == mesh3.n_faces
    assert np.array_equal(read_obj(path, mesh3).positions, u.positions)
