from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dccalc.algebra import Fn
from dccalc.cellgeom import (
    QuadratureRule,
    box_complex,
    box_halfspaces,
    build_complex,
    common_refinement,
    grid_complex,
    interval_complex,
    parse_rational,
)
from dccalc.errors import DegenerateCell, NonConformingFacet, QuadratureOrderTooLow


def test_interval_split_has_one_interior_facet():
    C = interval_complex([-1, 0, 1])
    assert len(C.cells) == 2
    (f,) = C.interior_facets
    assert f.barycenter == (0,)
    assert tuple(f.unit_normal) == (1.0,)
    assert (f.minus, f.plus) == (0, 1)


def test_unit_square_split():
    C = grid_complex([0, Fr(1, 2), 1], [0, 1])
    assert len(C.cells) == 2
    (f,) = C.interior_facets
    assert np.allclose(f.unit_normal, [1, 0])
    assert all(p[0] == Fr(1, 2) for p in f.points)


def test_hanging_node_is_rejected():
    V = [(0, 0), (1, 0), (1, 1), (0, 1), (2, 0), (2, 1), (1, Fr(1, 2))]
    with pytest.raises(NonConformingFacet):
        build_complex(V, [[0, 1, 2, 3], [1, 4, 5, 6], [6, 5, 2]])


def test_degenerate_cell():
    with pytest.raises(DegenerateCell):
        build_complex([(0, 0), (1, 1), (2, 2)], [[0, 1, 2]])


def test_basic_integrals():
    C = interval_complex([0, 1])
    assert C.integrate_cell(0, Fn.const(1, 1)) == 1
    S = grid_complex([0, 1], [0, 1])
    assert S.integrate_cell(0, Fn.from_expr(2, "x*y")) == Fr(1, 4)
    Q = grid_complex([-1, 0, 1], [-1, 1])
    (f,) = Q.interior_facets
    assert Q.integrate_facet(f.id, Fn.from_expr(2, "y**2")) == Fr(2, 3)


def _box_monomial(lo, hi, a, b):
    return (Fr(hi[0] ** (a + 1) - lo[0] ** (a + 1), a + 1)) * (Fr(hi[1] ** (b + 1) - lo[1] ** (b + 1), b + 1))


coord = st.fractions(min_value=-2, max_value=2, max_denominator=5)


@given(coord, coord, coord, coord, st.integers(0, 4), st.integers(0, 4))
def test_exact_monomial_integrals_match_closed_form(x0, x1, y0, y1, a, b):
    if x0 == x1 or y0 == y1:
        return
    lo, hi = (min(x0, x1), min(y0, y1)), (max(x0, x1), max(y0, y1))
    C = grid_complex([lo[0], hi[0]], [lo[1], hi[1]])
    got = C.integrate_cell(0, Fn.from_expr(2, f"x**{a} * y**{b}"))
    assert got == _box_monomial(lo, hi, a, b)


@given(st.integers(0, 10), st.integers(1, 3))
def test_quadrature_rule_exact_up_to_order(k, d):
    rule = QuadratureRule.of_order(10)
    T, W = rule.simplex(d)
    # int_simplex x_1^k = k! / (d + k)!  (times d! for unit measure)
    from math import factorial

    exact = factorial(k) / factorial(d + k)
    assert np.isclose(np.dot(W, T[:, 0] ** k), exact, rtol=1e-12, atol=1e-15)


def test_rule_too_low_for_polynomial_integrand():
    C = interval_complex([0, 1])
    with pytest.raises(QuadratureOrderTooLow):
        C.integrate_cell(0, Fn.from_expr(1, "x**9"), QuadratureRule.of_order(4))
    assert C.integrate_cell(0, Fn.from_expr(1, "x**4"), QuadratureRule.of_order(4)) == pytest.approx(0.2)


def test_locate():
    C = grid_complex([-1, 0, 1], [-1, 0, 1])
    assert C.locate((Fr(1, 2), Fr(1, 3)))[0] == "cell"
    assert C.locate((0, Fr(1, 2)))[0] == "facet"
    assert C.locate((0, 0))[0] == "skeleton"
    with pytest.raises(ValueError):
        C.locate((2, 0))


def test_clip_and_box_mass_of_lebesgue():
    C = box_complex([[0, Fr(1, 3), 1], [0, 1]])
    hs = box_halfspaces((Fr(1, 4), Fr(1, 4)), (Fr(1, 2), 1))
    from dccalc.cellgeom import simplex_volume

    vol = sum(simplex_volume(s) for c in C.cells for s in C.clip_cell(c.id, hs))
    assert vol == Fr(1, 4) * Fr(3, 4)


def test_common_refinement_merges_breaks():
    A = interval_complex([0, Fr(1, 2), 1])
    B = interval_complex([0, Fr(1, 3), 1])
    R, pa, pb = common_refinement(A, B)[:3]
    assert sorted(v[0] for v in R.vertices) == [0, Fr(1, 3), Fr(1, 2), 1]


def test_parse_rational():
    assert parse_rational("3/4") == Fr(3, 4)
    assert parse_rational(0.5) == Fr(1, 2)
    assert parse_rational("-2") == -2
