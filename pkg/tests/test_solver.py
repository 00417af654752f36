import csv
import json
import math

import numpy as np
import pytest

from capillarity import functionals as fn
from capillarity.anisotropy import radial_well, zero_field
from capillarity.lab.scan import cached_mesh
from capillarity.solver import (
    HISTORY_FIELDS,
    UNIT_BALL,
    SolverConfig,
    minimize_isovolumetric,
    multiplier_bounds,
    with_overrides,
)
from capillarity.spheremesh import SurfaceMap, rescale_to_volume


@pytest.mark.parametrize(
    "kw",
    [
        {"step_size": 0},
        {"backtrack": 1.0},
        {"backtrack": 0.0},
        {"max_iters": 0},
        {"residual_tol": -1},
        {"smooth_every": -1},
        {"center": (1.0, 2.0)},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_config_overrides_ignore_none():
    c = with_overrides(SolverConfig(), max_iters=7, seed=None, center=[1, 2, 3])
    assert c.max_iters == 7 and c.seed == 0 and c.center == (1.0, 2.0, 3.0)
    assert c.to_dict()["max_iters"] == 7


@pytest.mark.parametrize(
    "t,k0,expected",
    [
        (UNIT_BALL, 0.0, (2.0, 2.0)),
        (UNIT_BALL, 0.25, (1.75**2 / 2.25, 2 * 2.25 / 1.75)),
        (8 * UNIT_BALL, 0.25, (1.75**2 / 4.5, 2.25 / 1.75)),
    ],
)
def test_multiplier_bounds(t, k0, expected):
    assert multiplier_bounds(t, k0) == pytest.approx(expected, rel=1e-12)


def test_multiplier_bounds_examples():
    lo, hi = multiplier_bounds(UNIT_BALL, 0.25)
    assert (round(lo, 3), round(hi, 3)) == (1.361, 2.571)
    with pytest.raises(ValueError):
        multiplier_bounds(-1.0, 0.1)
    with pytest.raises(ValueError):
        multiplier_bounds(1.0, 2.0)


def test_zero_volume_rejected(mesh3):
    with pytest.raises(ValueError):
        minimize_isovolumetric(mesh3, zero_field(), 0.0)


@pytest.fixture(scope="module")
def ellipsoid_run():
    mesh = cached_mesh(3)
    x = mesh.vertices * [1.4, 1.0, 0.75] + 0.01 * np.random.default_rng(2).normal(size=mesh.vertices.shape)
    u0 = rescale_to_volume(SurfaceMap(x, mesh), UNIT_BALL)
    return u0, minimize_isovolumetric(mesh, zero_field(), UNIT_BALL, init=u0)


class TestZeroField:
    def test_converges_to_round_sphere(self, ellipsoid_run):
        u0, res = ellipsoid_run
        assert res.status == "converged"
        assert res.residual <= SolverConfig().residual_tol
        b = res.breakdown
        # D >= A and A^3 >= 36 pi V^2, both nearly tight at a round conformal sphere
        assert b.dirichlet / b.area == pytest.approx(1.0, abs=1e-3)
        assert b.area**3 / (36 * math.pi * b.volume**2) == pytest.approx(1.0, abs=5e-3)
        assert res.lam == pytest.approx(2.0, rel=5e-3)
        assert b.conformality_defect < 1e-6

    def test_energy_monotone(self, ellipsoid_run):
        e = [h["energy"] for h in ellipsoid_run[1].history]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(e, e[1:]))
        assert e[-1] < fn.dirichlet(ellipsoid_run[0])

    def test_volume_held(self, ellipsoid_run):
        res = ellipsoid_run[1]
        assert max(abs(h["volume_drift"]) for h in res.history) <= 1e-10
        assert fn.volume(res.surface) == pytest.approx(UNIT_BALL, rel=1e-12)

    def test_write(self, ellipsoid_run, tmp_path):
        res = ellipsoid_run[1]
        res.write(tmp_path, stem="z_")
        summary = json.loads((tmp_path / "z_result.json").read_text())
        assert summary["status"] == "converged" and summary["level"] == 3
        with open(tmp_path / "z_history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == HISTORY_FIELDS
        assert len(rows) == len(res.history)
        assert float(rows[-1]["energy"]) == res.history[-1]["energy"]
        assert (tmp_path / "z_surface.obj").stat().st_size > 0


@pytest.mark.parametrize("t", [UNIT_BALL, 4.0])
def test_radial_well_multiplier_in_bounds(t):
    fld = radial_well(0.5)
    res = minimize_isovolumetric(cached_mesh(3), fld, t)
    assert res.status == "converged"
    assert res.lam * t > 0
    lo, hi = multiplier_bounds(t, 0.25)
    assert lo <= res.lam <= hi


def test_radial_well_unit_sphere_multiplier():
    # round sphere of radius r in the well: lambda = 2/r + K(r)
    res = minimize_isovolumetric(cached_mesh(4), radial_well(0.5), UNIT_BALL)
    assert res.lam == pytest.approx(2.0 - 0.25, rel=2e-3)
    assert np.linalg.norm(res.surface.centroid()) < 1e-6


def test_negative_volume_flips(mesh3):
    res = minimize_isovolumetric(mesh3, zero_field(), -UNIT_BALL)
    assert res.status == "converged"
    assert fn.volume(res.surface) == pytest.approx(-UNIT_BALL, rel=1e-12)
    assert res.lam * res.t > 0


def test_callback_sees_every_iteration(mesh3):
    seen = []
    res = minimize_isovolumetric(mesh3, zero_field(), UNIT_BALL, SolverConfig(max_iters=5),
                                 callback=lambda it, u: seen.append(it))
    assert len(seen) == res.iterations


def test_max_iters_status(mesh3):
    u0 = rescale_to_volume(SurfaceMap(mesh3.vertices * [2.0, 1.0, 0.5], mesh3), UNIT_BALL)
    res = minimize_isovolumetric(mesh3, zero_field(), UNIT_BALL, SolverConfig(max_iters=2), init=u0)
    assert res.status == "max_iters"
    assert res.iterations == 2
