from fractions import Fraction as Fr
from itertools import product as iproduct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from _util import pw
from dccalc.atlas import TransitionMap
from dccalc.cellgeom import grid_complex, interval_complex
from dccalc.connection import (
    christoffel,
    christoffel_transform_check,
    covariant_derivative_tensor,
    covariant_derivative_vector,
    metric_compatibility_residual,
)
from dccalc.measurefield import MeasureField, derivative, measure_residual
from dccalc.metric import MetricField, identity_metric
from dccalc.tensorcalc import CovariantTensor, VectorField, differential

ANNULUS = grid_complex([1, Fr(3, 2), 2], [0, 1])
P = (Fr(5, 4), Fr(1, 3))


def _polar():
    return MetricField([[1, 0], [0, "x**2"]], ANNULUS)


def test_identity_metric_has_zero_christoffel():
    Gam = christoffel(identity_metric(grid_complex([0, 1], [0, 1])))
    assert all(Gam[k, i, j].is_zero() for k, i, j in iproduct(range(2), repeat=3))


def test_one_dimensional_christoffel():
    C = interval_complex([0, 1])
    Gam = christoffel(MetricField([["(1 + x)**2"]], C))
    assert measure_residual(Gam[0, 0, 0], MeasureField(C, [pw(C, "1/(1 + x)").pieces[0]])) == 0


def test_polar_christoffel():
    Gam = christoffel(_polar())
    assert Gam[1, 0, 1].ac[0].at(P) == Fr(4, 5)
    assert Gam[1, 1, 0].ac[0].at(P) == Fr(4, 5)
    assert Gam[0, 1, 1].ac[0].at(P) == Fr(-5, 4)
    for k, i, j in [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 1, 1)]:
        assert Gam[k, i, j].is_zero()
    assert Gam.symmetry_residual() == 0 and Gam.is_GM0()


def test_covariant_derivative_of_tensors():
    C = grid_complex([-1, 1], [-1, 1])
    f = pw(C, "(x**2 + y**2)/2")
    DS = covariant_derivative_tensor(differential(f), christoffel(identity_metric(C)))
    for i, j in iproduct(range(2), repeat=2):
        assert measure_residual(DS[i, j], MeasureField.lebesgue(C, int(i == j))) == 0
    # p = 0: plain derivative
    S0 = CovariantTensor(0, {(): f}, "BV", 2)
    D0 = covariant_derivative_tensor(S0, christoffel(identity_metric(C)))
    assert measure_residual(D0[(0,)], derivative(f, 0)) == 0
    # d(theta) on the polar chart: (DS)_{12} = -Gamma^2_{12}
    th = pw(ANNULUS, "y")
    DS = covariant_derivative_tensor(differential(th), christoffel(_polar()))
    assert DS[0, 1].ac[0].at(P) == Fr(-4, 5)


def test_covariant_derivative_of_vectors():
    C = interval_complex([0, 1])
    Gam = christoffel(identity_metric(C))
    out = covariant_derivative_vector(VectorField.constant(C, [3]), Gam)
    assert out[0][0].is_zero()
    out = covariant_derivative_vector(VectorField([pw(C, "x")]), Gam)
    assert measure_residual(out[0][0], MeasureField.lebesgue(C)) == 0
    out = covariant_derivative_vector(VectorField.constant(ANNULUS, [0, 1]), christoffel(_polar()))
    assert out[0][1].ac[0].at(P) == Fr(4, 5)


def test_metric_compatibility():
    assert metric_compatibility_residual(_polar(), christoffel(_polar())) == 0


def test_christoffel_transform_affine_and_parabola():
    S = grid_complex([-1, 1], [-1, 0, 1])
    A = TransitionMap(S, ["2*x + y", "x - y + 1"])
    assert christoffel_transform_check(A, identity_metric(A.target))["residual"] == 0
    assert christoffel_transform_check(A, MetricField([["1 + x**2", 0], [0, "1 + y**2"]], A.target))["residual"] == 0
    Pm = TransitionMap(S, ["x", "y + x**2"])
    r = christoffel_transform_check(Pm, identity_metric(Pm.target))
    assert r["residual"] <= 1e-8
    # with G~ = I only the second-derivative term survives: Gamma^1_00 = 2, the rest 0
    assert r["lhs"][1, 0, 0].ac[0].at((0, Fr(-1, 2))) == 2


@given(st.lists(st.fractions(min_value=-1, max_value=1, max_denominator=4), min_size=3, max_size=3))
def test_christoffel_symmetry_random_metric(c):
    C = grid_complex([-1, 0, 1], [-1, 1])
    G = MetricField([[f"3 + ({c[0]})*x**2", f"({c[1]})*x*y"], [f"({c[1]})*x*y", f"3 + ({c[2]})*y"]], C)
    Gam = christoffel(G)
    assert Gam.symmetry_residual() == 0
    assert Gam.is_GM0()
    assert metric_compatibility_residual(G, Gam) == 0
