from fractions import Fraction as Fr

import pytest
from hypothesis import given

from _util import abs_x, pw, pw_1d, square, step
from dccalc.cellgeom import grid_complex, interval_complex
from dccalc.errors import BoundaryFacetSideMissing, IncompatibleComplexes, UndefinedOnLowerSkeleton
from dccalc.pwalg import classify, precise_value, product, trace


def _facet_at_zero(C):
    return C.interior_facets[0].id


def test_traces_of_abs_and_step():
    f = abs_x()
    fid = _facet_at_zero(f.complex)
    assert trace(f, fid, "plus").at((0,)) == 0
    assert trace(f, fid, "minus").at((0,)) == 0
    s = step()
    assert trace(s, fid, "plus").at((0,)) == 1
    assert trace(s, fid, "minus").at((0,)) == 0


def test_traces_of_ramp_on_square_vanish_identically():
    C = square()
    f = pw(C, "0", "x")
    fid = _facet_at_zero(C)
    assert f.trace_restricted(fid, "plus").is_zero()
    assert f.trace_restricted(fid, "minus").is_zero()
    assert not f.jump_facets


def test_boundary_facet_side_missing():
    f = abs_x()
    bnd = f.complex.boundary_facets[0].id
    with pytest.raises(BoundaryFacetSideMissing):
        trace(f, bnd, "plus")


def test_precise_values():
    assert precise_value(step(), (0,)) == Fr(1, 2)
    assert precise_value(abs_x(), (0,)) == 0
    sign = pw(interval_complex([-1, 0, 1]), "-1", "1")
    assert precise_value(sign, (0,)) == 0
    assert precise_value(abs_x(), (Fr(-1, 3),)) == Fr(1, 3)


def test_precise_value_undefined_on_lower_skeleton():
    C = grid_complex([-1, 0, 1], [-1, 0, 1])
    f = pw(C, "x + y")
    with pytest.raises(UndefinedOnLowerSkeleton):
        precise_value(f, (0, 0))


def test_products():
    a = abs_x()
    assert product(a, a).equals(pw(a.complex, "x**2"))
    C = interval_complex([-1, 0, 1])
    sx = product(step(C), pw(C, "x"))
    assert sx.equals(pw(C, "0", "x"))
    assert not sx.jump_facets
    st = product(step(C), pw(C, "x + 1"))
    assert len(st.jump_facets) == 1
    D = interval_complex([0, 1])
    one = product(pw(D, "1 + x"), 1 / pw(D, "1 + x"))
    assert one.equals(pw(D, "1"))


def test_products_on_different_complexes_refine():
    A = pw(interval_complex([0, Fr(1, 2), 1]), "x", "1 - x")
    B = pw(interval_complex([0, Fr(1, 3), 1]), "1", "2")
    P = A * B
    assert len(P.complex.cells) == 3
    assert P.precise_value((Fr(1, 4),)) == Fr(1, 4)
    assert P.precise_value((Fr(3, 4),)) == Fr(1, 2)


def test_products_on_disjoint_domains_fail():
    A = pw(interval_complex([0, 1]), "x")
    B = pw(interval_complex([0, 2]), "x")
    with pytest.raises(IncompatibleComplexes):
        A * B


def test_classification_examples():
    fa = classify(abs_x())
    assert fa.is_DC and fa.is_BV0 and fa.is_continuous and not fa.is_DC0
    assert classify(pw(interval_complex([-1, 0, 1]), "x**2")).is_DC0
    fs = classify(step())
    assert fs.is_BV and not fs.is_Cwo and not fs.is_continuous


def test_denominator_vanishing_on_cell_is_rejected():
    C = interval_complex([-1, 1])
    with pytest.raises(ZeroDivisionError):
        pw(C, "1/x")


@given(pw_1d())
def test_continuity_iff_no_jump_facets(f):
    cont = all(
        f.pieces[fc.minus].at(fc.barycenter) == f.pieces[fc.plus].at(fc.barycenter) for fc in f.complex.interior_facets
    )
    assert cont == (not f.jump_facets)
    assert classify(f).is_continuous == cont


@given(pw_1d())
def test_precise_value_is_midpoint(f):
    for fc in f.complex.interior_facets:
        x = fc.barycenter
        lo = f.pieces[fc.minus].at(x)
        hi = f.pieces[fc.plus].at(x)
        assert f.precise_value(x) == (lo + hi) / 2


@given(pw_1d(continuous=True))
def test_continuous_construction_is_bv0(f):
    assert not f.jump_facets
    assert classify(f).is_BV0


@given(pw_1d(), pw_1d())
def test_algebra_is_commutative_and_traces_add(f, h):
    assert (f * h).equals(h * f)
    s = f + h
    for fc in s.complex.interior_facets:
        x = fc.barycenter
        assert s.precise_value(x) == f.precise_value(x) + h.precise_value(x)
