import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from capillarity.anisotropy import (
    AnisotropyField,
    BUILTIN_FIELDS,
    ball_integral,
    check_conditions,
    cone_sign,
    default_center_grid,
    estimate_t_minus,
    estimate_t_plus,
    eval_G0,
    eval_G1,
    eval_mK,
    eval_QK,
    jacobian_QK,
    k4_holds,
    make_field,
    radial_well,
    shifted_well,
    zero_field,
)

FIELDS = [
    radial_well(0.5),
    radial_well(1.0),
    shifted_well(0.5, (0.4, -0.3, 0.2)),
    cone_sign(0.5, 0.5),
    cone_sign(0.3, 0.2, (1.0, 1.0, 0.0)),
]
IDS = ["well", "well1", "shifted", "cone", "cone_tilt"]

coords = st.floats(-6, 6, allow_nan=False)
points = st.tuples(coords, coords, coords).map(np.array)


def well_m_exact(a, r):
    # int_0^1 -a s^2 / (1 + r^2 s^2) ds
    if r == 0:
        return -a / 3
    return -a * (r - math.atan(r)) / r**3


def m_by_quad(fld, p):
    val, _ = integrate.quad(lambda s: fld(s * np.asarray(p)) * s * s, 0, 1, epsabs=1e-15, epsrel=1e-13, limit=200)
    return val


@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 4.0, 30.0, 500.0])
def test_mK_radial_well_closed_form(r):
    fld = radial_well(0.5)
    p = np.array([0.0, r, 0.0])
    assert eval_mK(fld, p) == pytest.approx(well_m_exact(0.5, r), rel=1e-12, abs=1e-15)


def test_mK_at_origin_is_K_over_three():
    for fld in FIELDS:
        assert eval_mK(fld, np.zeros(3)) == pytest.approx(fld(np.zeros(3)) / 3, rel=1e-14)


def test_QK_example_value():
    # radial well a = 1/2 at p = (1, 0, 0): m = -(1 - pi/4)/2
    q = eval_QK(radial_well(0.5), np.array([1.0, 0.0, 0.0]))
    assert q == pytest.approx([-0.5 * (1 - math.pi / 4), 0.0, 0.0], abs=1e-14)


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
@given(p=points)
def test_mK_matches_adaptive_quadrature(fld, p):
    assert eval_mK(fld, p) == pytest.approx(m_by_quad(fld, p), rel=1e-9, abs=1e-13)


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_divergence_trace_identity(fld, rng):
    p = rng.normal(scale=3.0, size=(400, 3))
    p[:50] *= 30.0
    tr = np.trace(jacobian_QK(fld, p), axis1=-2, axis2=-1)
    assert np.abs(tr - fld(p)).max() <= 1e-9


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_node_count_agreement(fld, rng):
    p = rng.normal(scale=3.0, size=(200, 3))
    assert np.abs(eval_QK(fld, p, 16) - eval_QK(fld, p, 32)).max() <= 1e-12


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_jacobian_matches_finite_differences(fld, rng):
    p = rng.normal(scale=2.0, size=(20, 3))
    J = jacobian_QK(fld, p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (eval_QK(fld, p + e) - eval_QK(fld, p - e)) / (2 * h)
        assert np.abs(J[..., :, k] - fd).max() <= 1e-8


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_field_gradient_matches_finite_differences(fld, rng):
    p = rng.normal(scale=2.0, size=(30, 3))
    h = 1e-6
    fd = np.stack([(fld(p + h * e) - fld(p - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    assert np.abs(fld.gradient(p) - fd).max() <= 1e-8


def test_nodes_below_four_rejected():
    with pytest.raises(ValueError):
        eval_mK(radial_well(), np.ones(3), nodes=3)


def test_QK_decays_like_inverse_radius():
    fld = radial_well(0.5)
    r = np.array([10.0, 100.0, 1000.0])
    q = np.linalg.norm(eval_QK(fld, r[:, None] * [[0.0, 0.0, 1.0]]), axis=1)
    assert np.all(np.diff(q) < 0)
    # |Q| r -> a
    assert q[-1] * r[-1] == pytest.approx(0.5, rel=2e-3)


def test_G0_G1_examples():
    fld = radial_well(0.5)
    p = np.array([1.0, 0.0, 0.0])
    assert eval_G0(fld, p) == pytest.approx([-0.25, 0, 0])
    # (grad K . p) p = 2 a r^2 / (1 + r^2)^2 p
    assert eval_G1(fld, p) == pytest.approx([0.25, 0, 0])
    assert np.linalg.norm(eval_G1(fld, math.sqrt(3) * p)) == pytest.approx(3 * math.sqrt(3) * 0.5 / 8)


def test_check_conditions_radial_well():
    rep = check_conditions(radial_well(1.0))
    assert rep.k0_estimate == pytest.approx(0.5, rel=1e-6)
    assert rep.k0_estimate <= 0.5
    assert rep.k1_holds and rep.k2_holds
    assert rep.k3_estimate == pytest.approx(3 * math.sqrt(3) / 8, rel=1e-3)
    # sup |Q_K| for a = 1 sits near r ~ 1.5, below sup |K p|
    assert 0 < rep.q_sup < rep.k0_estimate
    assert rep.k_sup == pytest.approx(1.0, rel=1e-5)
    assert not rep.k4_holds


def test_check_conditions_zero_field():
    rep = check_conditions(zero_field())
    assert rep.k0_estimate == 0 and rep.q_sup == 0
    assert rep.k1_holds and rep.k2_holds and rep.k4_holds


def test_check_conditions_needs_far_radii():
    with pytest.raises(ValueError):
        check_conditions(radial_well(), radii=np.linspace(0, 10, 20))


def test_k4_threshold():
    assert k4_holds(0.1)
    assert not k4_holds(0.2)
    root = optimize.brentq(lambda k: 2 ** (2 / 3) * (2 + k) - (2 - k) ** 2, 0.0, 1.0)
    assert root == pytest.approx(0.1518, abs=1e-4)
    assert k4_holds(root - 1e-9) and not k4_holds(root + 1e-9)


def test_ball_integral_radial_well_closed_form():
    # -a 4 pi int_0^1 r^2/(1+r^2) dr = -2 pi (1 - pi/4) for a = 1/2
    exact = -2 * math.pi * (1 - math.pi / 4)
    assert ball_integral(radial_well(0.5), np.zeros(3), 1.0) == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(-1.348383, abs=1e-6)


def test_ball_integral_constant_and_additivity():
    one = AnisotropyField(lambda p: np.ones(np.shape(p)[:-1]), lambda p: np.zeros(np.shape(p)), "one")
    assert ball_integral(one, np.ones(3), 2.0) == pytest.approx(4 * math.pi * 8 / 3, rel=1e-13)
    f, g = radial_well(0.5), cone_sign(0.3)
    both = AnisotropyField(lambda p: f(p) + g(p), lambda p: f.gradient(p) + g.gradient(p), "sum")
    c = np.array([0.2, 0.1, -0.3])
    assert ball_integral(both, c, 1.5) == pytest.approx(
        ball_integral(f, c, 1.5) + ball_integral(g, c, 1.5), rel=1e-13)


def test_ball_integral_rejects_bad_radius():
    with pytest.raises(ValueError):
        ball_integral(radial_well(), np.zeros(3), 0.0)


class TestTPlus:
    radii = np.linspace(0.5, 2.0, 151)

    def test_zero_field(self):
        assert estimate_t_plus(zero_field(), default_center_grid(), self.radii) == 0.0

    def test_well_is_unbounded(self):
        assert estimate_t_plus(radial_well(), default_center_grid(), self.radii) == math.inf
        assert estimate_t_minus(radial_well(), default_center_grid(), self.radii) == 0.0

    def test_field_negative_only_inside_unit_ball(self):
        fld = AnisotropyField(lambda p: (p * p).sum(axis=-1) - 1.0, lambda p: 2 * p, "bump")
        t = estimate_t_plus(fld, default_center_grid(), self.radii)
        assert t == pytest.approx(4 * math.pi / 3, rel=0.03)
        assert estimate_t_minus(fld.negated(), default_center_grid(), self.radii) == pytest.approx(-t)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            estimate_t_plus(radial_well(), np.zeros((0, 3)), self.radii)


@pytest.mark.parametrize("label", sorted(BUILTIN_FIELDS))
def test_negated_and_factory(label, rng):
    fld = make_field(label)
    neg = fld.negated()
    p = rng.normal(size=(10, 3))
    assert np.array_equal(neg(p), -fld(p))
    assert np.allclose(neg.gradient(p), -fld.gradient(p), atol=0)
    assert np.allclose(neg.negated()(p), fld(p), atol=0)
    assert fld.to_dict()["label"] == label


def test_negated_custom_field():
    fld = AnisotropyField(lambda p: p[..., 0], lambda p: np.broadcast_to([1.0, 0, 0], p.shape), "x")
    assert fld.negated()(np.array([2.0, 0, 0])) == -2.0


def test_unknown_field():
    with pytest.raises(ValueError):
        make_field("nope")


def test_cone_sign_changes_sign_far_away():
    fld = cone_sign(0.5, 0.5)
    assert fld(np.array([0.0, 0.0, 50.0])) < 0
    assert fld(np.array([50.0, 0.0, 0.0])) > 0
