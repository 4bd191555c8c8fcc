"""Polyhedral cell complexes with exact facet geometry and quadrature.

Vertices are exact rationals.  Every facet stores an exact *primitive*
normal ``n`` (largest component of modulus one) oriented from the minus
cell to the plus cell, together with the numeric factor ``|n|`` that turns
it into the unit normal ``nu = n/|n|``.

Facet densities throughout the package are stored with respect to the
*reference facet measure* ``mu_F = H^{N-1} restricted to F, divided by |n|``.
With this choice the jump density of ``D_i f`` is exactly
``(f+ - f-) * n_i`` and stays rational.  Multiply by ``1/|n|`` to get a
density with respect to ``H^{N-1}`` (see :meth:`Facet.to_hausdorff`).
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import ceil, factorial, prod

import numpy as np
from scipy.special import roots_jacobi

from .algebra import Fn, to_fraction
from .errors import (
    DegenerateCell,
    IncompatibleComplexes,
    NonConformingFacet,
    QuadratureOrderTooLow,
)

# ---------------------------------------------------------------------------
# exact linear algebra


def as_point(p):
    return tuple(to_fraction(c) if not isinstance(c, float) else Fraction(c) for c in p)


def parse_rational(s):
    """Parse ``"p/q"``, an integer, or a decimal string exactly."""
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(repr(s))
    return Fraction(str(s).strip())


def det_exact(M):
    M = [list(map(Fraction, row)) for row in M]
    n = len(M)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        for r in range(c + 1, n):
            if M[r][c] != 0:
                f = M[r][c] / M[c][c]
                for k in range(c, n):
                    M[r][k] -= f * M[c][k]
    return det


def solve_exact(A, b):
    """Solve ``A x = b`` exactly; ``None`` if singular."""
    n = len(A)
    M = [list(map(Fraction, A[i])) + [Fraction(b[i])] for i in range(n)]
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return None
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c] / M[c][c]
                for k in range(c, n + 1):
                    M[r][k] -= f * M[c][k]
    return tuple(M[i][n] / M[i][i] for i in range(n))


def inverse_exact(A):
    n = len(A)
    cols = []
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        x = solve_exact(A, e)
        if x is None:
            raise ZeroDivisionError("singular matrix")
        cols.append(x)
    return [[cols[j][i] for j in range(n)] for i in range(n)]


def cross_normal(vectors, N):
    """Vector orthogonal to ``N-1`` vectors in ``R^N`` (generalized cross product)."""
    if N == 1:
        return (Fraction(1),)
    out = []
    for i in range(N):
        minor = [[v[j] for j in range(N) if j != i] for v in vectors]
        out.append((-1) ** i * det_exact(minor))
    return tuple(out)


def primitive_normal(n):
    """Scale so the largest |component| is 1 and the first nonzero entry is positive."""
    k = next(i for i, c in enumerate(n) if c != 0)
    m = max(abs(c) for c in n)
    s = 1 if n[k] > 0 else -1
    return tuple(s * c / m for c in n)


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def affine_rank(points):
    if len(points) <= 1:
        return 0
    p0 = points[0]
    rows = [list(sub(p, p0)) for p in points[1:]]
    rank = 0
    ncol = len(p0)
    M = [list(r) for r in rows]
    for c in range(ncol):
        piv = next((r for r in range(rank, len(M)) if M[r][c] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c] != 0:
                f = M[r][c] / M[rank][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[rank])]
        rank += 1
    return rank


def polytope_faces(points):
    """Supporting facets of a full-dimensional convex point set.

    Returns a list of ``(a, b, idx)`` with ``a.x <= b`` for every point and
    ``idx`` the frozenset of point indices lying on the face.
    """
    N = len(points[0])
    if N == 1:
        xs = [p[0] for p in points]
        lo, hi = min(xs), max(xs)
        return [
            ((Fraction(-1),), -lo, frozenset(i for i, x in enumerate(xs) if x == lo)),
            ((Fraction(1),), hi, frozenset(i for i, x in enumerate(xs) if x == hi)),
        ]
    faces = {}
    for combo in combinations(range(len(points)), N):
        p0 = points[combo[0]]
        vecs = [sub(points[j], p0) for j in combo[1:]]
        a = cross_normal(vecs, N)
        if all(c == 0 for c in a):
            continue
        a = primitive_normal(a)
        b = dot(a, p0)
        vals = [dot(a, q) - b for q in points]
        if all(v <= 0 for v in vals):
            pass
        elif all(v >= 0 for v in vals):
            a = tuple(-c for c in a)
            b = -b
        else:
            continue
        on = frozenset(i for i, v in enumerate(vals) if v == 0)
        if on not in faces:
            faces[on] = (a, b, on)
    return list(faces.values())


def _angle_sort(points2d_idx, proj):
    cx = sum(float(proj[i][0]) for i in points2d_idx) / len(points2d_idx)
    cy = sum(float(proj[i][1]) for i in points2d_idx) / len(points2d_idx)
    return sorted(points2d_idx, key=lambda i: np.arctan2(float(proj[i][1]) - cy, float(proj[i][0]) - cx))


def triangulate_convex(points):
    """Triangulate the convex hull of exact points (affine dimension <= 3).

    Returns a list of simplices, each a tuple of points (``d+1`` points for
    hull dimension ``d``).
    """
    pts = list(dict.fromkeys(points))
    d = affine_rank(pts)
    if d == 0:
        return [(pts[0],)]
    N = len(pts[0])
    # coordinates to project on: choose d columns of full rank
    p0 = pts[0]
    diffs = [sub(p, p0) for p in pts[1:]]
    cols = None
    for cand in combinations(range(N), d):
        if affine_rank([tuple(p[c] for c in cand) for p in pts]) == d:
            cols = cand
            break
    proj = [tuple(p[c] for c in cols) for p in pts]
    del diffs
    if d == 1:
        order = sorted(range(len(pts)), key=lambda i: proj[i][0])
        return [(pts[order[0]], pts[order[-1]])]
    if d == 2:
        order = _angle_sort(list(range(len(pts))), proj)
        out = []
        for k in range(1, len(order) - 1):
            tri = (pts[order[0]], pts[order[k]], pts[order[k + 1]])
            if affine_rank(list(tri)) == 2:
                out.append(tri)
        return out
    # d == 3 (then N == 3)
    out = []
    for a, b, idx in polytope_faces(proj):
        if 0 in idx:
            continue
        for tri in triangulate_convex([pts[i] for i in sorted(idx)]):
            simplex = (pts[0],) + tri
            if affine_rank(list(simplex)) == 3:
                out.append(simplex)
    return out


def halfspace_vertices(halfspaces, N):
    """Vertices of ``{x : a.x <= b for all (a, b)}`` (bounded, exact)."""
    verts = {}
    for combo in combinations(range(len(halfspaces)), N):
        A = [halfspaces[i][0] for i in combo]
        b = [halfspaces[i][1] for i in combo]
        x = solve_exact(A, b)
        if x is None:
            continue
        if all(dot(a, x) <= bb for a, bb in halfspaces):
            verts[x] = None
    return list(verts)


def box_halfspaces(lo, hi):
    N = len(lo)
    hs = []
    for i in range(N):
        e = tuple(Fraction(int(j == i)) for j in range(N))
        hs.append((e, Fraction(hi[i])))
        hs.append((tuple(-c for c in e), -Fraction(lo[i])))
    return hs


def simplex_volume(simplex):
    d = len(simplex) - 1
    p0 = simplex[0]
    M = [sub(p, p0) for p in simplex[1:]]
    return abs(det_exact(M)) / factorial(d)


# ---------------------------------------------------------------------------
# quadrature


class QuadratureRule:
    """Collapsed Gauss-Jacobi rules on reference simplices.

    Parameters
    ----------
    order : int
        Declared polynomial exactness.
    points_per_direction : int, optional
        Number of 1-D nodes; defaults to the minimum that achieves ``order``.
        Requesting too few nodes makes the self-check fail.
    """

    _cache = {}

    def __init__(self, order, points_per_direction=None, seed=0):
        self.order = int(order)
        self.m = points_per_direction or max(1, ceil((self.order + 1) / 2))
        self._rules = {}
        self._self_check(seed)

    @classmethod
    def of_order(cls, order):
        if order not in cls._cache:
            cls._cache[order] = cls(order)
        return cls._cache[order]

    def simplex(self, d):
        """Nodes (M, d) and weights (M,) on ``{t >= 0, sum t <= 1}``; weights sum to ``1/d!``."""
        if d in self._rules:
            return self._rules[d]
        m = self.m
        if d == 0:
            rule = (np.zeros((1, 0)), np.ones(1))
        else:
            grids = []
            for k in range(d):
                alpha = d - 1 - k
                x, w = roots_jacobi(m, alpha, 0)
                u = (1 + x) / 2
                w = w / 2 ** (alpha + 1)
                grids.append((u, w))
            mesh = np.meshgrid(*[g[0] for g in grids], indexing="ij")
            wmesh = np.meshgrid(*[g[1] for g in grids], indexing="ij")
            U = np.stack([g.ravel() for g in mesh], axis=1)
            W = np.prod(np.stack([g.ravel() for g in wmesh], axis=1), axis=1)
            T = np.zeros_like(U)
            rest = np.ones(len(U))
            for k in range(d):
                T[:, k] = rest * U[:, k]
                rest = rest * (1 - U[:, k])
            rule = (T, W)
        self._rules[d] = rule
        return rule

    def _self_check(self, seed):
        rng = np.random.default_rng(seed)
        for d in (1, 2, 3):
            a = rng.multinomial(self.order, np.ones(d) / d)
            exact = float(Fraction(prod(factorial(int(k)) for k in a), factorial(d + self.order)))
            T, W = self.simplex(d)
            approx = float(np.sum(W * np.prod(T ** a, axis=1)))
            if abs(approx - exact) > 1e-11 * max(abs(exact), 1e-300) + 1e-300:
                raise QuadratureOrderTooLow(
                    f"rule with {self.m} nodes per direction is not exact to order {self.order} in {d}-D"
                )


def monomial_simplex_integral(exps, d):
    """Exact integral of ``prod t_k^{a_k}`` over the reference ``d``-simplex."""
    num = 1
    for a in exps[:d]:
        num *= factorial(a)
    return Fraction(num, factorial(d + sum(exps[:d])))


def _affine_param(simplex, N):
    """Fn substitutions ``x_i = w0_i + sum_k (w_k - w0)_i t_k`` in ``N`` variables."""
    w0 = simplex[0]
    d = len(simplex) - 1
    ts = [Fn.var(N, k) for k in range(d)]
    subs = []
    for i in range(N):
        expr = Fn.const(N, w0[i])
        for k in range(d):
            c = simplex[k + 1][i] - w0[i]
            if c != 0:
                expr = expr + ts[k] * c
        subs.append(expr)
    return subs


# default rule for non-polynomial densities, by simplex dimension
_DEFAULT_NUMERIC_ORDER = {1: 80, 2: 30, 3: 16}


def integrate_simplex(simplex, density, factor, rule=None):
    """Integrate ``density`` over an affine simplex.

    ``factor`` is the ratio between the target measure of the simplex and
    the Lebesgue measure of the reference simplex.  Polynomial exact
    densities integrate exactly when ``rule`` is None; otherwise the rule is
    used (float result).
    """
    N = len(simplex[0])
    d = len(simplex) - 1
    if d == 0:
        if density.kind == "exact":
            return factor * density.at(simplex[0])
        return float(factor) * float(density(np.array([[float(c) for c in simplex[0]]]))[0])
    if rule is None and density.is_polynomial():
        g = density.compose(_affine_param(simplex, N))
        total = Fraction(0)
        for exps, c in g.poly_terms():
            total += c * monomial_simplex_integral(exps, d)
        return factor * total
    if rule is None:
        rule = QuadratureRule.of_order(_DEFAULT_NUMERIC_ORDER[d])
    elif density.is_polynomial() and density.degree() > rule.order:
        raise QuadratureOrderTooLow(
            f"polynomial integrand of degree {density.degree()} exceeds the rule's exactness degree {rule.order}"
        )
    T, W = rule.simplex(d)
    P = simplex_nodes(simplex, T)
    return float(factor) * float(np.dot(W, density(P)))


def box_monomial_integral(density, lo, hi):
    """Exact integral of a polynomial over ``prod [lo_i, hi_i]``; degenerate axes are evaluated."""
    from sympy import QQ

    num = density.value.numer
    deg = max((max(m) for m in num.monoms()), default=0)
    tables = []
    for a, b in zip(lo, hi):
        a, b = QQ(a.numerator, a.denominator), QQ(b.numerator, b.denominator)
        if a == b:
            tables.append([a ** e for e in range(deg + 1)])
        else:
            tables.append([(b ** (e + 1) - a ** (e + 1)) / (e + 1) for e in range(deg + 1)])
    total = QQ(0)
    for exps, c in num.terms():
        term = c
        for t, e in zip(tables, exps):
            term *= t[e]
        total += term
    return to_fraction(total / density.value.denom.LC)


def simplex_nodes(simplex, T):
    w0 = np.array([float(c) for c in simplex[0]])
    E = np.array([[float(c) for c in sub(p, simplex[0])] for p in simplex[1:]]).reshape(len(simplex) - 1, len(w0))
    return w0 + T @ E


# ---------------------------------------------------------------------------
# complex


@dataclass
class Cell:
    id: int
    vertex_ids: tuple
    points: tuple
    faces: list  # (a, b, facet_id) with a.x <= b inside
    simplices: list
    volume: Fraction
    barycenter: tuple

    def contains(self, p, strict=False):
        vals = [dot(a, p) - b for a, b, _ in self.faces]
        if strict:
            return all(v < 0 for v in vals)
        return all(v <= 0 for v in vals)


@dataclass
class Facet:
    id: int
    vertex_ids: tuple
    points: tuple
    normal: tuple  # exact primitive normal, minus -> plus
    offset: Fraction  # normal . x == offset on the facet
    minus: int
    plus: object  # int or None for boundary facets
    simplices: list
    factors: list  # mu_F(simplex) / |reference simplex|
    norm: float  # |normal|
    measure: Fraction  # mu_F(F)
    barycenter: tuple

    @property
    def is_boundary(self):
        return self.plus is None

    @property
    def unit_normal(self):
        return np.array([float(c) for c in self.normal]) / self.norm

    def to_hausdorff(self, density):
        """Convert a density w.r.t. ``mu_F`` into one w.r.t. ``H^{N-1}``."""
        return density * (1.0 / self.norm) if self.norm != 1 else density


def _facet_simplex_factor(simplex, normal):
    """``mu_F(T) / |ref simplex|`` for an (N-1)-simplex ``T`` on a facet."""
    N = len(normal)
    if N == 1:
        return Fraction(1)
    vecs = [sub(p, simplex[0]) for p in simplex[1:]]
    nt = cross_normal(vecs, N)
    k = max(range(N), key=lambda i: abs(normal[i]))
    return abs(nt[k] / normal[k])


class CellComplex:
    """Conforming polyhedral complex (see module docstring).

    Parameters
    ----------
    vertices : sequence of points
        Exact coordinates (ints, Fractions or rational strings).
    cells : sequence of sequences of int
        Vertex indices of each convex top cell.
    """

    def __init__(self, vertices, cells):
        verts = [tuple(parse_rational(c) for c in v) for v in vertices]
        if not verts:
            raise DegenerateCell("no vertices")
        N = len(verts[0])
        if N not in (1, 2, 3) or any(len(v) != N for v in verts):
            raise ValueError("vertices must all have dimension 1, 2 or 3")
        self.N = N
        self.vertices = tuple(verts)
        self.cells = []
        self.facets = []
        self._refinements = {}
        faces_by_key = {}
        for cid, vids in enumerate(cells):
            vids = tuple(int(i) for i in vids)
            pts = tuple(verts[i] for i in vids)
            if len(set(pts)) < N + 1 or affine_rank(list(pts)) < N:
                raise DegenerateCell(f"cell {cid} has zero volume")
            simplices = triangulate_convex(list(pts))
            vol = sum((simplex_volume(s) for s in simplices), Fraction(0))
            if vol == 0:
                raise DegenerateCell(f"cell {cid} has zero volume")
            faces = []
            for a, b, idx in polytope_faces(list(pts)):
                key = frozenset(vids[i] for i in idx)
                faces.append((a, b, key))
                faces_by_key.setdefault(key, []).append((cid, a, b))
            bary = tuple(sum(p[i] for p in pts) / len(pts) for i in range(N))
            self.cells.append(Cell(cid, vids, pts, faces, simplices, vol, bary))
        key_to_fid = {}
        for key, incident in faces_by_key.items():
            if len(incident) > 2:
                raise NonConformingFacet(f"facet {sorted(key)} shared by more than two cells")
            fid = len(self.facets)
            key_to_fid[key] = fid
            vids = tuple(sorted(key))
            pts = tuple(verts[i] for i in vids)
            if len(incident) == 2:
                (c1, a1, b1), (c2, _, _) = incident
                n = primitive_normal(a1)
                off = dot(n, pts[0])
                side1 = dot(n, self.cells[c1].barycenter) - off
                side2 = dot(n, self.cells[c2].barycenter) - off
                if side1 * side2 >= 0:
                    raise NonConformingFacet(f"cells {c1},{c2} lie on one side of their shared facet")
                minus, plus = (c1, c2) if side1 < 0 else (c2, c1)
            else:
                (c1, a1, b1), = incident
                n, off = a1, b1  # outward
                minus, plus = c1, None
            simplices = triangulate_convex(list(pts))
            factors = [_facet_simplex_factor(s, n) for s in simplices]
            measure = sum((f / factorial(N - 1) for f in factors), Fraction(0))
            bary = tuple(sum(p[i] for p in pts) / len(pts) for i in range(N))
            norm = float(np.sqrt(sum(float(c) ** 2 for c in n)))
            self.facets.append(Facet(fid, vids, pts, n, off, minus, plus, simplices, factors, norm, measure, bary))
        for cell in self.cells:
            cell.faces = [(a, b, key_to_fid[key]) for a, b, key in cell.faces]
        self._check_conforming()
        self.volume = sum((c.volume for c in self.cells), Fraction(0))

    # -- validation -----------------------------------------------------
    def _check_conforming(self):
        scale = max(
            max(abs(v[i]) for v in self.vertices) for i in range(self.N)
        ) + 1
        eps = Fraction(1, 10**7) * scale
        for cell in self.cells:
            for other in self.cells:
                if other.id != cell.id and other.contains(cell.barycenter, strict=True):
                    raise NonConformingFacet(f"cells {cell.id} and {other.id} overlap")
        for f in self.facets:
            if not f.is_boundary:
                continue
            probe = tuple(c + eps * n for c, n in zip(f.barycenter, f.normal))
            for cell in self.cells:
                if cell.id != f.minus and cell.contains(probe):
                    raise NonConformingFacet(
                        f"facet {list(f.vertex_ids)} of cell {f.minus} meets cell {cell.id} without matching"
                    )

    # -- structure --------------------------------------------------------
    @property
    def key(self):
        return (self.vertices, tuple(c.vertex_ids for c in self.cells))

    def same_as(self, other):
        return self is other or self.key == other.key

    @property
    def interior_facets(self):
        return [f for f in self.facets if not f.is_boundary]

    @property
    def boundary_facets(self):
        return [f for f in self.facets if f.is_boundary]

    def cell_facets(self, cid):
        return [fid for _, _, fid in self.cells[cid].faces]

    def facet_param(self, fid):
        """Affine substitutions parametrising the hyperplane of facet ``fid``."""
        return _affine_param(self.facets[fid].simplices[0], self.N)

    def facet_normal_density(self, fid, i):
        """Component ``i`` of the normal carried by the reference facet measure."""
        return Fn.const(self.N, self.facets[fid].normal[i])

    def locate(self, point):
        """Classify an exact point.

        Returns ``("cell", cid)``, ``("facet", fid)`` or ``("skeleton", None)``.
        Raises ``ValueError`` outside the domain.
        """
        p = as_point(point)
        hits = []
        for cell in self.cells:
            vals = [dot(a, p) - b for a, b, _ in cell.faces]
            if all(v < 0 for v in vals):
                return ("cell", cell.id)
            if all(v <= 0 for v in vals):
                zero = [fid for (a, b, fid), v in zip(cell.faces, vals) if v == 0]
                hits.append((cell.id, zero))
        if not hits:
            raise ValueError(f"point {point} outside the domain")
        if any(len(z) > 1 for _, z in hits):
            return ("skeleton", None)
        fids = {z[0] for _, z in hits}
        if len(fids) != 1:
            return ("skeleton", None)
        return ("facet", fids.pop())

    def locate_numeric(self, pts, tol=1e-12):
        """Cell index of each float point (first match), -1 if outside."""
        pts = np.asarray(pts, dtype=float)
        out = -np.ones(len(pts), dtype=int)
        for cell in self.cells:
            A = np.array([[float(c) for c in a] for a, _, _ in cell.faces])
            b = np.array([float(bb) for _, bb, _ in cell.faces])
            inside = np.all(pts @ A.T - b <= tol, axis=1) & (out < 0)
            out[inside] = cell.id
        return out

    # -- integration ------------------------------------------------------
    def _box_cache(self):
        if getattr(self, "_boxes", None) is None:
            self._boxes = {}
        return self._boxes

    def _cell_box(self, cid):
        """``(lo, hi)`` when cell ``cid`` is an axis-aligned box, else None."""
        cache = self._box_cache()
        key = ("cell", cid)
        if key not in cache:
            pts = self.cells[cid].points
            lo = [min(p[i] for p in pts) for i in range(self.N)]
            hi = [max(p[i] for p in pts) for i in range(self.N)]
            vol = Fraction(1)
            for a, b in zip(lo, hi):
                vol *= b - a
            cache[key] = (lo, hi) if vol == self.cells[cid].volume else None
        return cache[key]

    def _facet_box(self, fid):
        """``(lo, hi, ratio)`` for an axis-aligned box facet; ``ratio = mu_F / Lebesgue``."""
        cache = self._box_cache()
        key = ("facet", fid)
        if key not in cache:
            f = self.facets[fid]
            cache[key] = None
            if self.N >= 2 and sum(c != 0 for c in f.normal) == 1:
                axis = next(i for i, c in enumerate(f.normal) if c != 0)
                lo = [min(p[i] for p in f.points) for i in range(self.N)]
                hi = [max(p[i] for p in f.points) for i in range(self.N)]
                free = [i for i in range(self.N) if i != axis]
                vol = Fraction(1)
                for i in free:
                    vol *= hi[i] - lo[i]
                leb = sum(simplex_volume([tuple(p[i] for i in free) for p in smp]) for smp in f.simplices)
                if vol != 0 and leb == vol:
                    cache[key] = (lo, hi, Fraction(f.measure) / vol)
        return cache[key]

    def integrate_cell(self, cid, density, rule=None):
        """Integrate against Lebesgue measure on cell ``cid``."""
        cell = self.cells[cid]
        if rule is None and density.kind == "exact" and density.is_polynomial():
            box = self._cell_box(cid)
            if box is not None:
                return box_monomial_integral(density, *box)
        total = 0
        for s in cell.simplices:
            vol = simplex_volume(s) * factorial(self.N)
            total = total + integrate_simplex(s, density, vol, rule)
        return total

    def integrate_facet(self, fid, density, rule=None):
        """Integrate against the reference facet measure ``mu_F``."""
        f = self.facets[fid]
        if rule is None and density.kind == "exact" and density.is_polynomial():
            box = self._facet_box(fid)
            if box is not None:
                return box[2] * box_monomial_integral(density, box[0], box[1])
        total = 0
        for s, fac in zip(f.simplices, f.factors):
            total = total + integrate_simplex(s, density, fac, rule)
        return total

    def integrate_facet_hausdorff(self, fid, density, rule=None):
        """Integrate against ``H^{N-1}`` on facet ``fid``."""
        f = self.facets[fid]
        val = self.integrate_facet(fid, density, rule)
        return float(val) * f.norm if f.norm != 1 else val

    def cell_nodes(self, cid, rule):
        """Quadrature nodes and Lebesgue weights covering cell ``cid``."""
        cell = self.cells[cid]
        T, W = rule.simplex(self.N)
        P, Ws = [], []
        for s in cell.simplices:
            vol = float(simplex_volume(s) * factorial(self.N))
            P.append(simplex_nodes(s, T))
            Ws.append(W * vol)
        return np.vstack(P), np.concatenate(Ws)

    def facet_nodes(self, fid, rule):
        """Quadrature nodes and ``mu_F`` weights covering facet ``fid``."""
        f = self.facets[fid]
        T, W = rule.simplex(self.N - 1)
        P, Ws = [], []
        for s, fac in zip(f.simplices, f.factors):
            P.append(simplex_nodes(s, T))
            Ws.append(W * float(fac))
        return np.vstack(P), np.concatenate(Ws)

    # -- clipping ----------------------------------------------------------
    def clip_cell(self, cid, halfspaces):
        """Simplices of ``cell ∩ {a.x <= b}`` (empty list if lower-dimensional)."""
        cell = self.cells[cid]
        hs = [(a, b) for a, b, _ in cell.faces] + list(halfspaces)
        verts = halfspace_vertices(hs, self.N)
        if len(verts) < self.N + 1 or affine_rank(verts) < self.N:
            return []
        return triangulate_convex(verts)

    def clip_facet(self, fid, halfspaces):
        """Sub-simplices and ``mu_F`` factors of ``facet ∩ {a.x <= b}``."""
        f = self.facets[fid]
        cell = self.cells[f.minus]
        neg = tuple(-c for c in f.normal)
        hs = [(a, b) for a, b, _ in cell.faces] + list(halfspaces)
        hs += [(f.normal, f.offset), (neg, -f.offset)]
        verts = halfspace_vertices(hs, self.N)
        verts = [v for v in verts if dot(f.normal, v) == f.offset]
        if len(verts) < self.N or affine_rank(verts) < self.N - 1:
            return []
        simplices = triangulate_convex(verts)
        return [(s, _facet_simplex_factor(s, f.normal)) for s in simplices]

    def __repr__(self):
        return f"CellComplex(N={self.N}, cells={len(self.cells)}, facets={len(self.facets)})"


def build_complex(vertices, cells):
    """Build and validate a :class:`CellComplex`."""
    return CellComplex(vertices, cells)


def interval_complex(breaks):
    """1-D complex with the given sorted breakpoints."""
    breaks = [parse_rational(b) for b in breaks]
    return CellComplex([(b,) for b in breaks], [(i, i + 1) for i in range(len(breaks) - 1)])


def grid_complex(xbreaks, ybreaks):
    """2-D complex of axis-aligned rectangles."""
    xs = [parse_rational(b) for b in xbreaks]
    ys = [parse_rational(b) for b in ybreaks]
    verts = [(x, y) for y in ys for x in xs]
    nx = len(xs)
    cells = []
    for j in range(len(ys) - 1):
        for i in range(nx - 1):
            v = j * nx + i
            cells.append((v, v + 1, v + nx + 1, v + nx))
    return CellComplex(verts, cells)


def box_complex(breaks_per_axis):
    """Axis-aligned grid complex in any dimension 1..3."""
    if len(breaks_per_axis) == 1:
        return interval_complex(breaks_per_axis[0])
    if len(breaks_per_axis) == 2:
        return grid_complex(*breaks_per_axis)
    xs, ys, zs = [[parse_rational(b) for b in ax] for ax in breaks_per_axis]
    verts = [(x, y, z) for z in zs for y in ys for x in xs]
    nx, ny = len(xs), len(ys)
    cells = []
    for k in range(len(zs) - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                ids = []
                for dk in (0, 1):
                    for dj in (0, 1):
                        for di in (0, 1):
                            ids.append((k + dk) * nx * ny + (j + dj) * nx + i + di)
                cells.append(tuple(ids))
    return CellComplex(verts, cells)


# ---------------------------------------------------------------------------
# common refinement


def polytope_intersection(c1, c2, N):
    hs = [(a, b) for a, b, _ in c1.faces] + [(a, b) for a, b, _ in c2.faces]
    verts = halfspace_vertices(hs, N)
    if len(verts) < N + 1 or affine_rank(verts) < N:
        return None
    return verts


def common_refinement(A, B):
    """Common refinement of two complexes over the same domain.

    Returns ``(C, parent_a, parent_b)`` where ``parent_x[c]`` is the cell of
    ``x`` containing refined cell ``c``.
    """
    if A.same_as(B):
        ids = list(range(len(A.cells)))
        return A, ids, ids
    cache_key = B.key
    if cache_key in A._refinements:
        return A._refinements[cache_key]
    if A.N != B.N:
        raise IncompatibleComplexes("dimension mismatch")
    if A.volume != B.volume:
        raise IncompatibleComplexes("complexes cover different domains")
    vindex = {}
    cells, pa, pb = [], [], []
    covered = Fraction(0)
    for c1 in A.cells:
        for c2 in B.cells:
            verts = polytope_intersection(c1, c2, A.N)
            if verts is None:
                continue
            ids = []
            for v in verts:
                ids.append(vindex.setdefault(v, len(vindex)))
            cells.append(tuple(ids))
            pa.append(c1.id)
            pb.append(c2.id)
    vertices = sorted(vindex, key=vindex.get)
    try:
        C = CellComplex(vertices, cells)
    except NonConformingFacet as exc:
        raise IncompatibleComplexes(f"refinement is not conforming: {exc}") from exc
    covered = C.volume
    if covered != A.volume:
        raise IncompatibleComplexes("complexes cover different domains")
    A._refinements[cache_key] = (C, pa, pb)
    return C, pa, pb
