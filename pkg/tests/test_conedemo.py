from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dccalc.conedemo import (
    ConeScene,
    angle_regression,
    chart_independence,
    cut_locus_jump_measure,
    mass_balance,
    parse_angle,
)
from dccalc.errors import AnnulusTouchesApex, ApexQuery


def _cone_dist(theta, q1, q2):
    gap = abs(q1[1] - q2[1]) % theta
    gap = min(gap, theta - gap)
    if gap >= pi:
        return q1[0] + q2[0]
    return sqrt(max(q1[0] ** 2 + q2[0] ** 2 - 2 * q1[0] * q2[0] * np.cos(gap), 0.0))


def test_parse_angle():
    assert float(parse_angle("3pi/2")) == pytest.approx(1.5 * pi)
    assert float(parse_angle("1.5*pi")) == pytest.approx(1.5 * pi)
    assert float(parse_angle(2.0)) == 2.0


def test_distance_examples():
    plane = ConeScene("2*pi")
    assert plane.distance((1.0, pi / 2)) == pytest.approx(sqrt(2), abs=1e-15)
    assert plane.distance((1.0, 0.0)) == 0.0
    half = ConeScene("pi", base_radius=2.0, annulus=(3.0, 4.0))
    # the two unfoldings place p at angles 0 and theta; on the cut ray both give the same distance
    c, a = half.cut_angle, half.a
    d_minus = sqrt(2 * a * a - 2 * a * a * np.cos(c))
    d_plus = sqrt(2 * a * a - 2 * a * a * np.cos(half.theta - c))
    assert d_minus == pytest.approx(d_plus, abs=1e-15)
    assert half.distance((2.0, half.cut_angle)) == pytest.approx(2.0 * sqrt(2), abs=1e-14)


def test_errors():
    sc = ConeScene()
    with pytest.raises(ApexQuery):
        sc.distance((0.0, 1.0))
    with pytest.raises(ApexQuery):
        sc.distance_gradients((0.0, sc.cut_angle))
    with pytest.raises(AnnulusTouchesApex):
        ConeScene("3pi/2", 1.0, (1e-4, 0.5))
    with pytest.raises(ValueError):
        ConeScene("3pi", 1.0)
    with pytest.raises(ValueError):
        ConeScene("3pi/2", 1.0, (0.5, 2.0))


def test_plane_limit_has_no_jump():
    sc = ConeScene("2*pi")
    rho = np.linspace(3, 5, 11)
    assert np.max(np.abs(sc.explicit_jump_density(rho))) <= 1e-15
    d = sc.distance_array(rho, np.full_like(rho, 0.7))
    assert np.allclose(sc.ac_density(rho, np.full_like(rho, 0.7)), 1 / d)


@given(st.floats(0.2, 6), st.floats(0, 2 * pi), st.floats(0.2, 6), st.floats(0, 2 * pi),
       st.sampled_from(["3pi/2", "pi", "1.2*pi", "2pi"]))
def test_distance_is_one_lipschitz(r1, p1, r2, p2, ang):
    sc = ConeScene(ang)
    th = sc.theta
    q1, q2 = (r1, p1 % th), (r2, p2 % th)
    assert abs(sc.distance(q1) - sc.distance(q2)) <= _cone_dist(th, q1, q2) + 1e-12


def test_cut_jump_matches_weak_form_oracle():
    sc = ConeScene("3pi/2", 1.0)
    rep = cut_locus_jump_measure(sc, n_samples=20)
    assert rep["max_abs_error"] <= 1e-6
    assert rep["hessian_jump_nonpositive"] and rep["max_jump_density"] < 0
    assert rep["max_tangential_jump"] <= 1e-12
    assert rep["measure_density_error"] <= 1e-12


def test_mass_balance_and_regression():
    assert mass_balance(ConeScene("3pi/2"))["residual"] <= 1e-9
    reg = angle_regression()
    assert reg["decreasing"] and reg["final"] < 1e-3


def test_chart_independence():
    rep = chart_independence(ConeScene("3pi/2"))
    assert rep["max_spread"] <= 1e-9
