"""Cellwise rational functions and their BV/DC class flags."""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product as iproduct

import numpy as np

from .algebra import EXACT, Fn, rational_field, to_fraction, _qq
from .cellgeom import CellComplex, _affine_param, common_refinement, as_point
from .errors import BoundaryFacetSideMissing, UndefinedOnLowerSkeleton


@dataclass(frozen=True)
class ClassFlags:
    is_continuous: bool
    is_DC: bool
    is_BV: bool
    is_BV0: bool
    is_Cw: bool
    is_Cwo: bool
    is_DC0: bool


def facet_restriction(fn, complex, fid):
    """Restrict an N-variable density to facet ``fid`` of ``complex``.

    The facet is parametrised over its first sub-simplex, extended to the
    whole hyperplane (or its image under a polynomial chart map), so two
    densities agree on the facet iff their restrictions agree as rational
    functions.
    """
    return fn.compose(complex.facet_param(fid))


def agree_on_facet(a, b, complex, fid):
    """Exact test of ``a == b`` on a facet (None if undecidable)."""
    d = a - b
    if d.kind == EXACT and d.value == 0:
        return True
    return facet_restriction(d, complex, fid).is_zero()


def _bernstein_positive(poly_fn, simplex):
    """Sufficient exact certificate that a polynomial has constant strict sign on a simplex.

    Returns +1/-1 when all Bernstein coefficients share a strict sign, else 0.
    """
    N = len(simplex[0])
    K, lam = rational_field(N + 1)
    subs = []
    for i in range(N):
        e = K(0)
        for k, v in enumerate(simplex):
            if v[i] != 0:
                e = e + lam[k] * _qq(v[i])
        subs.append(Fn(N + 1, EXACT, e))
    p = poly_fn.compose(subs).value.numer
    d = poly_fn.degree()
    # homogenise with sum(lam) = 1
    s = sum(lam[: N + 1], K(0)).numer
    hom = 0
    for mon, c in p.terms():
        deg = sum(mon)
        term = p.ring({mon: c})
        if deg < d:
            term = term * s ** (d - deg)
        hom = hom + term
    from math import factorial

    signs = set()
    coeffs = dict(hom.terms()) if hom != 0 else {}
    # every multi-index of degree d appears (missing ones have coefficient 0)
    for alpha in _multi_indices(N + 1, d):
        c = to_fraction(coeffs.get(alpha, 0))
        mult = Fraction(factorial(d))
        for a in alpha:
            mult /= factorial(a)
        b = c / mult
        signs.add((b > 0) - (b < 0))
    if signs == {1}:
        return 1
    if signs == {-1}:
        return -1
    return 0


def _multi_indices(k, d):
    if k == 1:
        yield (d,)
        return
    for i in range(d + 1):
        for rest in _multi_indices(k - 1, d - i):
            yield (i,) + rest


def check_denominator(fn, cell, samples=64, rng=None):
    """Verify that the denominator of an exact piece has no zero on the closed cell."""
    if fn.kind != EXACT or fn.value.denom.is_ground:
        return True
    den = fn.denominator()
    if not hasattr(cell, "simplices"):
        # curved image cell: sample the mapped points only
        vals = den(np.array([[float(c) for c in p] for p in cell.points + (cell.barycenter,)]))
        if np.all(vals > 0) or np.all(vals < 0):
            return True
        raise ZeroDivisionError(f"denominator of piece on cell {cell.id} vanishes on the closed cell")
    if all(_bernstein_positive(den, s) != 0 for s in cell.simplices):
        signs = {_bernstein_positive(den, s) for s in cell.simplices}
        if len(signs) == 1:
            return True
    # sampling fallback: vertices plus random barycentric points
    rng = rng or np.random.default_rng(0)
    pts = [np.array([float(c) for c in p]) for p in cell.points]
    for s in cell.simplices:
        V = np.array([[float(c) for c in p] for p in s])
        w = rng.dirichlet(np.ones(len(s)), size=samples)
        pts.extend(w @ V)
    vals = den(np.array(pts))
    if np.all(vals > 0) or np.all(vals < 0):
        return True
    raise ZeroDivisionError(f"denominator of piece on cell {cell.id} vanishes on the closed cell")


class PiecewiseScalar:
    """Cellwise function on a :class:`CellComplex`.

    Parameters
    ----------
    complex : CellComplex
    pieces : list of Fn or scalar or str
        One density per top cell.
    check : bool
        Verify denominators (exact pieces) on construction.
    """

    def __init__(self, complex, pieces, name=None, check=True):
        if len(pieces) != len(complex.cells):
            raise ValueError("need exactly one piece per cell")
        self.complex = complex
        N = complex.N
        self.pieces = [_as_fn(p, N) for p in pieces]
        self.name = name
        if check and isinstance(complex, CellComplex):
            for cell, p in zip(complex.cells, self.pieces):
                check_denominator(p, cell)

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, complex, c):
        return cls(complex, [Fn.const(complex.N, c)] * len(complex.cells), check=False)

    @classmethod
    def coordinate(cls, complex, i):
        return cls(complex, [Fn.var(complex.N, i)] * len(complex.cells), check=False)

    @classmethod
    def from_fn(cls, complex, fn):
        return cls(complex, [fn] * len(complex.cells))

    @property
    def N(self):
        return self.complex.N

    @property
    def is_exact(self):
        return all(p.kind == EXACT for p in self.pieces)

    # -- traces -----------------------------------------------------------
    def trace(self, fid, side):
        """Piece of the cell on ``side`` ("plus"/"minus") of facet ``fid``."""
        f = self.complex.facets[fid]
        cid = f.plus if side == "plus" else f.minus
        if cid is None:
            raise BoundaryFacetSideMissing(f"facet {fid} is a boundary facet without a {side} side")
        return self.pieces[cid]

    def trace_restricted(self, fid, side):
        """Trace as a rational function of the facet parameters."""
        return facet_restriction(self.trace(fid, side), self.complex, fid)

    def precise_trace(self, fid):
        """Density whose facet values are the precise representative."""
        f = self.complex.facets[fid]
        if f.is_boundary:
            return self.pieces[f.minus]
        return (self.pieces[f.minus] + self.pieces[f.plus]) * Fraction(1, 2)

    def jump(self, fid):
        """``f+ - f-`` on an interior facet (as an N-variable density)."""
        f = self.complex.facets[fid]
        return self.pieces[f.plus] - self.pieces[f.minus]

    @cached_property
    def jump_facets(self):
        out = []
        for f in self.complex.interior_facets:
            same = agree_on_facet(self.pieces[f.plus], self.pieces[f.minus], self.complex, f.id)
            if same is None:
                same = _numeric_agree(self.pieces[f.plus], self.pieces[f.minus], self.complex, f.id)
            if not same:
                out.append(f.id)
        return frozenset(out)

    @cached_property
    def gradient_jump_facets(self):
        out = set()
        for i in range(self.N):
            out |= self.partial(i).jump_facets
        return frozenset(out)

    @cached_property
    def flags(self):
        cont = not self.jump_facets
        c2 = self.is_exact or all(p.kind != "numeric" for p in self.pieces)
        dc0 = cont and c2 and not self.gradient_jump_facets
        return ClassFlags(
            is_continuous=cont,
            is_DC=cont and c2,
            is_BV=True,
            is_BV0=cont,
            is_Cw=True,
            is_Cwo=cont,
            is_DC0=dc0,
        )

    def classify(self):
        return self.flags

    # -- evaluation ---------------------------------------------------------
    def precise_value(self, point):
        kind, idx = self.complex.locate(point)
        p = as_point(point)
        if kind == "cell":
            return self.pieces[idx].at(p)
        if kind == "facet":
            f = self.complex.facets[idx]
            if f.is_boundary:
                return self.pieces[f.minus].at(p)
            a = self.pieces[f.minus].at(p)
            b = self.pieces[f.plus].at(p)
            return (a + b) / 2
        raise UndefinedOnLowerSkeleton(f"point {point} lies on the lower skeleton")

    def __call__(self, pts):
        """Numeric evaluation (cell of first match; use off the skeleton)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        cells = self.complex.locate_numeric(pts)
        out = np.full(len(pts), np.nan)
        for cid in np.unique(cells):
            if cid < 0:
                continue
            m = cells == cid
            out[m] = self.pieces[cid](pts[m])
        return out

    # -- algebra ------------------------------------------------------------
    def _binary(self, other, op):
        if not isinstance(other, PiecewiseScalar):
            return PiecewiseScalar(self.complex, [op(p, other) for p in self.pieces], check=False)
        C, pa, pb = common_refinement(self.complex, other.complex)
        pieces = [op(self.pieces[i], other.pieces[j]) for i, j in zip(pa, pb)]
        return PiecewiseScalar(C, pieces, check=False)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PiecewiseScalar):
            out = self._binary(other, lambda a, b: a / b)
            for cell, p in zip(out.complex.cells, out.pieces):
                check_denominator(p, cell)
            return out
        return self._binary(other, lambda a, b: a / b)

    def __rtruediv__(self, other):
        num = other if isinstance(other, Fn) else Fn.const(self.N, other)
        out = PiecewiseScalar(self.complex, [num / p for p in self.pieces], check=False)
        for cell, p in zip(out.complex.cells, out.pieces):
            check_denominator(p, cell)
        return out

    def __neg__(self):
        return PiecewiseScalar(self.complex, [-p for p in self.pieces], check=False)

    def __pow__(self, k):
        return PiecewiseScalar(self.complex, [p ** k for p in self.pieces], check=False)

    def product(self, other):
        return self * other

    def partial(self, i):
        """Cellwise partial derivative (a BV function in general)."""
        return PiecewiseScalar(self.complex, [p.diff(i) for p in self.pieces], check=False)

    def gradient_pieces(self):
        return [self.partial(i) for i in range(self.N)]

    def on(self, complex):
        """Re-express on a refinement ``complex`` of this function's complex."""
        if complex.same_as(self.complex):
            return self
        pieces = []
        for cell in complex.cells:
            kind, idx = self.complex.locate(cell.barycenter)
            if kind != "cell":
                raise ValueError("target is not a refinement of this complex")
            pieces.append(self.pieces[idx])
        return PiecewiseScalar(complex, pieces, check=False)

    def sqrt(self):
        """Pointwise square root (exact where every piece is a perfect square)."""
        out = []
        for cell, p in zip(self.complex.cells, self.pieces):
            out.append(p.sqrt(sample=cell.barycenter))
        return PiecewiseScalar(self.complex, out, check=False)

    def compose(self, F):
        """Pull back by a transition map ``F`` whose target carries ``self``."""
        return F.pullback_function(self)

    def is_zero(self):
        return all(p.is_zero() for p in self.pieces)

    def equals(self, other):
        return (self - other).is_zero()

    def __repr__(self):
        return f"PiecewiseScalar({self.pieces})"


def _as_fn(p, N):
    if isinstance(p, Fn):
        return p
    if isinstance(p, str):
        return Fn.from_expr(N, p)
    return Fn.const(N, p)


def _numeric_agree(a, b, complex, fid, tol=1e-12):
    from .cellgeom import QuadratureRule

    P, _ = complex.facet_nodes(fid, QuadratureRule.of_order(6))
    va, vb = a(P), b(P)
    return bool(np.all(np.abs(va - vb) <= tol * (1 + np.abs(va))))


def trace(f, fid, side):
    return f.trace(fid, side)


def precise_value(f, point):
    return f.precise_value(point)


def classify(f):
    return f.flags


def product(f, h):
    return f * h
