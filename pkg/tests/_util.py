"""Small constructors shared by the tests."""

from fractions import Fraction

from hypothesis import strategies as st

from dccalc.algebra import Fn
from dccalc.cellgeom import grid_complex, interval_complex
from dccalc.pwalg import PiecewiseScalar


def pw(C, *exprs):
    """PiecewiseScalar from one expression per cell (a single expression is broadcast)."""
    if len(exprs) == 1:
        exprs = exprs * len(C.cells)
    return PiecewiseScalar(C, [Fn.from_expr(C.N, e) for e in exprs])


def abs_x(C=None):
    C = C or interval_complex([-1, 0, 1])
    return pw(C, "-x", "x")


def step(C=None):
    C = C or interval_complex([-1, 0, 1])
    return pw(C, "0", "1")


def square(n=1):
    """[-1, 1]^2 split at 0 along x (n=1) or both axes (n=2)."""
    return grid_complex([-1, 0, 1], [-1, 1] if n == 1 else [-1, 0, 1])


small = st.fractions(min_value=-3, max_value=3, max_denominator=6)


@st.composite
def polys_1d(draw, degree=3):
    cs = draw(st.lists(small, min_size=1, max_size=degree + 1))
    return " + ".join(f"({c})*x**{k}" for k, c in enumerate(cs))


@st.composite
def interval_breaks(draw, n_min=2, n_max=4):
    inner = draw(st.lists(st.fractions(min_value=Fraction(-9, 10), max_value=Fraction(9, 10), max_denominator=10),
                          min_size=n_min - 1, max_size=n_max - 1, unique=True))
    return [Fraction(-1)] + sorted(inner) + [Fraction(1)]


@st.composite
def pw_1d(draw, continuous=False, degree=3):
    """Random piecewise polynomial on a random partition of [-1, 1]."""
    breaks = draw(interval_breaks())
    C = interval_complex(breaks)
    exprs = [draw(polys_1d(degree)) for _ in C.cells]
    f = pw(C, *exprs)
    if continuous:
        # add constants cell by cell so that traces agree
        fixed = [exprs[0]]
        shift = Fraction(0)
        for k in range(1, len(exprs)):
            b = breaks[k]
            left = Fn.from_expr(1, fixed[-1]).at((b,))
            right = Fn.from_expr(1, exprs[k]).at((b,))
            fixed.append(f"({exprs[k]}) + ({left - right})")
        f = pw(C, *fixed)
    return f
