"""Transition maps, mapped complexes, partitions of unity and global measures."""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iproduct

import numpy as np
from scipy.optimize import brentq

from .algebra import EXACT, Fn
from .cellgeom import (
    CellComplex,
    QuadratureRule,
    _affine_param,
    box_complex,
    box_halfspaces,
    common_refinement,
    dot,
    inverse_exact,
    simplex_nodes,
)
from .errors import (
    CoverageGap,
    IncompatibleComplexes,
    IncompatibleSystem,
    InversionDiverged,
    NotDC0,
    NotHomeomorphic,
    UndefinedOnLowerSkeleton,
)
from .measurefield import MeasureField, measure_residual, multiply
from .metric import adjugate, det_matrix
from .pwalg import PiecewiseScalar, _bernstein_positive


def _facet_keys(C):
    return {frozenset(f.vertex_ids): f.id for f in C.facets}


class TransitionMap:
    """Chart change ``F`` defined cellwise on ``source`` by polynomial components.

    Parameters
    ----------
    source : CellComplex
    components : list
        ``N`` entries, each a PiecewiseScalar on ``source`` or an Fn /
        expression string used on every cell.

    The *affine tier* (all pieces of degree <= 1) has an exact image
    complex and exact inverse; the *polynomial tier* maps onto a
    :class:`MappedComplex` and inverts numerically.
    """

    newton_tol = 1e-12
    newton_maxiter = 50

    def __init__(self, source, components, name=None, lattice_order=4):
        self.source = source
        self.N = source.N
        self.name = name
        comps = []
        for c in components:
            if isinstance(c, PiecewiseScalar):
                comps.append(c if c.complex is source else PiecewiseScalar(source, c.on(source).pieces, check=False))
            else:
                fn = c if isinstance(c, Fn) else Fn.from_expr(self.N, c)
                comps.append(PiecewiseScalar(source, [fn] * len(source.cells), check=False))
        if len(comps) != self.N:
            raise ValueError("need one component per coordinate")
        for c in comps:
            if not all(p.is_polynomial() for p in c.pieces):
                raise ValueError("transition components must be polynomial on each cell")
            if not c.flags.is_DC0:
                raise NotDC0("transition map components must be C^1 across facets")
        self.components = comps
        self.tier = "affine" if all(p.degree() <= 1 for c in comps for p in c.pieces) else "polynomial"
        self.jacobian = [[comps[i].partial(j) for j in range(self.N)] for i in range(self.N)]
        self.det = det_matrix(self.jacobian)
        self.sign = self._sign_certificate()
        adj = adjugate(self.jacobian)
        self.jacobian_inverse = [[adj[i][j] / self.det for j in range(self.N)] for i in range(self.N)]
        self.abs_det = self.det * self.sign
        if self.tier == "affine":
            self.target = self._image_complex()
            self._src_keys = _facet_keys(source)
            self._tgt_keys = _facet_keys(self.target)
        else:
            self.target = MappedComplex(self)
        self._check_injective(lattice_order)

    # -- validation -----------------------------------------------------------
    def _sign_certificate(self):
        signs = set()
        for cell, p in zip(self.source.cells, self.det.pieces):
            if p.degree() == 0:
                v = p.at(cell.barycenter)
                signs.add((v > 0) - (v < 0))
                continue
            for s in cell.simplices:
                signs.add(_bernstein_positive(p, s))
        if 0 in signs or len(signs) != 1:
            # fall back to sampling the continuous determinant
            rule = QuadratureRule.of_order(8)
            vals = []
            for cell in self.source.cells:
                P, _ = self.source.cell_nodes(cell.id, rule)
                vals.append(self.det.pieces[cell.id](P))
            vals = np.concatenate(vals)
            if np.all(vals > 0):
                return 1
            if np.all(vals < 0):
                return -1
            raise NotHomeomorphic("sign of det dF is not constant")
        return signs.pop()

    def _image_complex(self):
        verts = []
        owner = {}
        for cell in self.source.cells:
            for v in cell.vertex_ids:
                owner.setdefault(v, cell.id)
        for k, v in enumerate(self.source.vertices):
            cid = owner[k]
            verts.append(tuple(c.pieces[cid].at(v) for c in self.components))
        try:
            return CellComplex(verts, [c.vertex_ids for c in self.source.cells])
        except Exception as exc:  # overlapping images
            raise NotHomeomorphic(f"image cells do not form a complex: {exc}") from exc

    def _check_injective(self, order):
        rule = QuadratureRule.of_order(order)
        pts = np.vstack([self.source.cell_nodes(c.id, rule)[0] for c in self.source.cells])
        Y = self.map_points(pts)
        dx = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        dy = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
        bad = (dx > 1e-12) & (dy <= 1e-12 * (1 + dx))
        if bad.any():
            raise NotHomeomorphic("map is not injective on the sample lattice")

    # -- numeric evaluation -----------------------------------------------------
    def _cells_of(self, X):
        cells = self.source.locate_numeric(X, tol=1e-9)
        if (cells < 0).any():
            # extension: use the nearest cell barycenter's piece
            B = np.array([[float(c) for c in cell.barycenter] for cell in self.source.cells])
            far = cells < 0
            cells[far] = np.argmin(np.linalg.norm(X[far][:, None] - B[None], axis=-1), axis=1)
        return cells

    def map_points(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cells = self._cells_of(X)
        out = np.empty_like(X)
        for cid in np.unique(cells):
            m = cells == cid
            for i, c in enumerate(self.components):
                out[m, i] = c.pieces[cid](X[m])
        return out

    def jacobian_points(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cells = self._cells_of(X)
        out = np.empty((len(X), self.N, self.N))
        for cid in np.unique(cells):
            m = cells == cid
            for i in range(self.N):
                for j in range(self.N):
                    out[m, i, j] = self.jacobian[i][j].pieces[cid](X[m])
        return out

    def inverse_points(self, Y):
        """Damped Newton inversion ``X = F^{-1}(Y)`` seeded at cell barycenters."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        B = np.array([[float(c) for c in cell.barycenter] for cell in self.source.cells])
        FB = self.map_points(B)
        order = np.argsort(np.linalg.norm(Y[:, None] - FB[None], axis=-1), axis=1)
        X = np.empty_like(Y)
        for k, y in enumerate(Y):
            for seed in order[k]:
                x = self._newton(y, B[seed].copy())
                if x is not None:
                    X[k] = x
                    break
            else:
                raise InversionDiverged(f"no seed converged for y={y}")
        return X

    def _newton(self, y, x):
        tol = self.newton_tol * (1 + np.linalg.norm(y))
        r = self.map_points(x)[0] - y
        nr = np.linalg.norm(r)
        for _ in range(self.newton_maxiter):
            if nr <= tol:
                return x
            J = self.jacobian_points(x)[0]
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                return None
            lam = 1.0
            while lam > 1e-6:
                xn = x - lam * step
                rn = self.map_points(xn)[0] - y
                if np.linalg.norm(rn) < nr:
                    break
                lam /= 2
            else:
                return None
            x, r, nr = xn, rn, np.linalg.norm(rn)
        return x if nr <= tol else None

    # -- exact algebra -----------------------------------------------------------
    def _subs(self, cid):
        return [c.pieces[cid] for c in self.components]

    def affine_data(self, cid=0):
        """``(A, b)`` with ``F(x) = A x + b`` on cell ``cid`` (affine tier)."""
        N = self.N
        zero = tuple(Fraction(0) for _ in range(N))
        A = [[self.jacobian[i][j].pieces[cid].at(zero) for j in range(N)] for i in range(N)]
        b = [self.components[i].pieces[cid].at(zero) for i in range(N)]
        return A, b

    def pullback_function(self, h):
        """``h o F`` as a PiecewiseScalar on the source."""
        h = _on_target(h, self.target)
        pieces = [h.pieces[c.id].compose(self._subs(c.id)) for c in self.source.cells]
        return PiecewiseScalar(self.source, pieces, check=False)

    def _normal_factor(self, fid):
        """``|dF^{-T} n_src|`` relative to the target facet reference measure."""
        f = self.source.facets[fid]
        if self.tier == "affine":
            A, _ = self.affine_data(f.minus)
            Ainv = inverse_exact(A)
            w = [sum(Ainv[j][i] * f.normal[j] for j in range(self.N)) for i in range(self.N)]
            tf = self.target.facets[self._tgt_keys[frozenset(f.vertex_ids)]]
            k = max(range(self.N), key=lambda i: abs(tf.normal[i]))
            return Fn.const(self.N, abs(w[k] / tf.normal[k]))
        return Fn.numeric(self.N, lambda P, fid=fid: self._cof_norm(fid, P) / np.abs(self._det_points(fid, P)))

    def _det_points(self, fid, P):
        f = self.source.facets[fid]
        return self.det.pieces[f.minus](P)

    def _cof_norm(self, fid, P):
        """``|cof(dF) n_src|`` at source points on facet ``fid``."""
        f = self.source.facets[fid]
        J = np.empty((len(P), self.N, self.N))
        for i in range(self.N):
            for j in range(self.N):
                J[:, i, j] = self.jacobian[i][j].pieces[f.minus](P)
        n = np.array([float(c) for c in f.normal])
        det = np.linalg.det(J)
        w = np.linalg.solve(np.transpose(J, (0, 2, 1)), np.broadcast_to(n, (len(P), self.N))[..., None])[..., 0]
        return np.abs(det) * np.linalg.norm(w, axis=1)

    def target_facet(self, fid):
        if self.tier == "affine":
            return self._tgt_keys[frozenset(self.source.facets[fid].vertex_ids)]
        return fid

    def source_facet(self, tfid):
        if self.tier == "affine":
            key = frozenset(self.target.facets[tfid].vertex_ids)
            return self._src_keys[key]
        return tfid

    def pullback_measure(self, mu):
        """``F*(mu) = (F^{-1})_#(|det dF^{-1}| mu)`` on the source."""
        mu = _on_target(mu, self.target)
        ac = [mu.ac[c.id].compose(self._subs(c.id)) for c in self.source.cells]
        jump = {}
        for tfid, d in mu.jump.items():
            fid = self.source_facet(tfid)
            f = self.source.facets[fid]
            pulled = d.compose(self._subs(f.minus))
            if self.tier == "affine":
                jump[fid] = pulled * self._normal_factor(fid)
            else:
                jump[fid] = pulled * Fn.numeric(self.N, lambda P, fid=fid: self._cof_norm(fid, P) / np.abs(self._det_points(fid, P)))
        return MeasureField(self.source, ac, jump)

    def pushforward(self, mu):
        """``F_#(mu)`` on the target complex."""
        if not mu.complex.same_as(self.source):
            raise IncompatibleComplexes("measure does not live on the map's source")
        if self.tier == "affine":
            inv = self.inverse_map()
            absdet = abs(self.det.pieces[0].at(self.source.cells[0].barycenter))
            ac = [mu.ac[c.id].compose(inv._subs(c.id)) * (1 / absdet) for c in self.source.cells]
            jump = {}
            for fid, d in mu.jump.items():
                factor = self._normal_factor(fid).at(self.source.facets[fid].barycenter)
                f = self.source.facets[fid]
                tfid = self.target_facet(fid)
                jump[tfid] = d.compose(inv._subs(self.target.facets[tfid].minus)) * (1 / (absdet * factor))
            return MeasureField(self.target, ac, jump)
        ac = []
        for c in self.source.cells:
            dens = mu.ac[c.id]
            if dens.kind == EXACT and dens.value == 0:
                ac.append(dens)
                continue

            def f(Yp, dens=dens, cid=c.id):
                X = self.inverse_points(Yp)
                return dens(X) / np.abs(self.det.pieces[cid](X))

            ac.append(Fn.numeric(self.N, f))
        jump = {}
        for fid, d in mu.jump.items():
            def g(Yp, d=d, fid=fid):
                X = self.inverse_points(Yp)
                return d(X) / self._cof_norm(fid, X)

            jump[fid] = Fn.numeric(self.N, g)
        return MeasureField(self.target, ac, jump)

    def inverse_map(self):
        """Exact inverse transition (affine tier only)."""
        if self.tier != "affine":
            raise NotImplementedError("exact inverse only on the affine tier")
        if getattr(self, "_inverse", None) is None:
            A, b = self.affine_data(0)
            Ainv = inverse_exact(A)
            N = self.N
            comps = []
            for i in range(N):
                e = Fn.const(N, -sum(Ainv[i][j] * b[j] for j in range(N)))
                for j in range(N):
                    if Ainv[i][j] != 0:
                        e = e + Fn.var(N, j) * Ainv[i][j]
                comps.append(e)
            self._inverse = TransitionMap(self.target, comps, name=f"inverse of {self.name}")
        return self._inverse

    def map_halfspaces(self, halfspaces):
        """Image of ``{a.x <= b}`` under an affine F as halfspaces in target coordinates."""
        A, c = self.affine_data(0)
        Ainv = inverse_exact(A)
        out = []
        for a, b in halfspaces:
            at = tuple(sum(a[i] * Ainv[i][j] for i in range(self.N)) for j in range(self.N))
            out.append((at, b + dot(at, c)))
        return out

    def __repr__(self):
        return f"TransitionMap({self.name or ''}, tier={self.tier})"


def _on_target(obj, target):
    if obj.complex is target or obj.complex.same_as(target):
        if isinstance(obj, PiecewiseScalar) and obj.complex is not target:
            return PiecewiseScalar(target, obj.pieces, check=False)
        if isinstance(obj, MeasureField) and obj.complex is not target:
            return obj.on(target)
        return obj
    if isinstance(target, MappedComplex):
        raise IncompatibleComplexes("object does not live on the mapped complex")
    return obj.on(target)


# ---------------------------------------------------------------------------
# mapped complex (polynomial tier)


@dataclass
class _MappedCell:
    id: int
    barycenter: tuple
    points: tuple = ()


@dataclass
class _MappedFacet:
    id: int
    minus: int
    plus: object
    barycenter: tuple
    normal: object = None
    norm: float = 1.0

    @property
    def is_boundary(self):
        return self.plus is None

    def to_hausdorff(self, density):
        return density


class MappedComplex:
    """Image ``F(source)`` of a complex under a polynomial transition map.

    Cells and facets are indexed like the source.  Facet densities are with
    respect to ``H^{N-1}`` on the curved image facets.
    """

    def __init__(self, F):
        self.F = F
        self.source = F.source
        self.N = F.N
        self.cells = []
        for c in self.source.cells:
            subs = F._subs(c.id)
            self.cells.append(_MappedCell(c.id, tuple(p.at(c.barycenter) for p in subs),
                                          tuple(tuple(p.at(v) for p in subs) for v in c.points)))
        self.facets = []
        for f in self.source.facets:
            self.facets.append(
                _MappedFacet(f.id, f.minus, f.plus, tuple(p.at(f.barycenter) for p in F._subs(f.minus)))
            )
        self._refinements = {}

    @property
    def key(self):
        return ("mapped", id(self.F))

    def same_as(self, other):
        return other is self or (isinstance(other, MappedComplex) and other.F is self.F)

    @property
    def interior_facets(self):
        return [f for f in self.facets if not f.is_boundary]

    @property
    def boundary_facets(self):
        return [f for f in self.facets if f.is_boundary]

    @property
    def vertices(self):
        return [tuple(float(x) for x in v) for v in self.F.map_points(
            np.array([[float(c) for c in v] for v in self.source.vertices]))]

    def facet_param(self, fid):
        f = self.source.facets[fid]
        param = _affine_param(f.simplices[0], self.N)
        return [p.compose(param) for p in self.F._subs(f.minus)]

    def facet_normal_density(self, fid, i):
        f = self.source.facets[fid]
        n = np.array([float(c) for c in f.normal])

        def g(Yp):
            X = self.F.inverse_points(Yp)
            J = self.F.jacobian_points(X)
            w = np.linalg.solve(np.transpose(J, (0, 2, 1)), np.broadcast_to(n, (len(X), self.N))[..., None])[..., 0]
            return w[:, i] / np.linalg.norm(w, axis=1)

        return Fn.numeric(self.N, g)

    def integrate_cell(self, cid, density, rule=None):
        pulled = density.compose(self.F._subs(cid)) * self.F.abs_det.pieces[cid]
        return self.source.integrate_cell(cid, pulled, rule)

    def integrate_facet(self, fid, density, rule=None):
        f = self.source.facets[fid]
        pulled = density.compose(self.F._subs(f.minus))
        J = Fn.numeric(self.N, lambda P: self.F._cof_norm(fid, P))
        return self.source.integrate_facet(fid, pulled * J, rule)

    integrate_facet_hausdorff = integrate_facet

    def cell_nodes(self, cid, rule):
        P, W = self.source.cell_nodes(cid, rule)
        return self.F.map_points(P), W * np.abs(self.F.det.pieces[cid](P))

    def facet_nodes(self, fid, rule):
        P, W = self.source.facet_nodes(fid, rule)
        return self.F.map_points(P), W * self.F._cof_norm(fid, P)

    def locate_numeric(self, Y, tol=1e-12):
        X = self.F.inverse_points(Y)
        return self.source.locate_numeric(X, tol)

    def locate(self, point):
        X = self.F.inverse_points(np.array([[float(c) for c in point]]))[0]
        cells = []
        for cell in self.source.cells:
            vals = [float(dot(a, X)) - float(b) for a, b, _ in cell.faces]
            if all(v < -1e-10 for v in vals):
                return ("cell", cell.id)
            if all(v <= 1e-10 for v in vals):
                cells.append([fid for (a, b, fid), v in zip(cell.faces, vals) if abs(v) <= 1e-10])
        if not cells:
            raise ValueError("point outside the mapped domain")
        if any(len(z) > 1 for z in cells):
            return ("skeleton", None)
        fids = {z[0] for z in cells}
        return ("facet", fids.pop()) if len(fids) == 1 else ("skeleton", None)

    def mass_in(self, mu, halfspaces, rule=None):
        """Mass of a polytope for measures on 1-D or 2-D mapped complexes."""
        order = 30
        xg, wg = np.polynomial.legendre.leggauss(order)
        A = np.array([[float(c) for c in a] for a, _ in halfspaces])
        b = np.array([float(bb) for _, bb in halfspaces])

        def inside(Yp):
            return np.all(Yp @ A.T - b <= 1e-14, axis=1)

        total = 0.0
        if self.N == 1:
            for cell in self.source.cells:
                lo, hi = sorted(float(p[0]) for p in cell.points)
                total += _segment_mass(lambda t: np.array([[t]]), lo, hi, self, mu.ac[cell.id], inside,
                                       lambda X: np.abs(self.F.det.pieces[cell.id](X)), xg, wg)
        elif mu.ac and not all(a.kind == EXACT and a.value == 0 for a in mu.ac):
            raise NotImplementedError("box masses of absolutely continuous parts need N == 1")
        for fid, d in mu.jump.items():
            f = self.source.facets[fid]
            if self.N == 1:
                y = self.F.map_points(np.array([[float(f.points[0][0])]]))
                if inside(y)[0]:
                    total += float(d(y)[0])
                continue
            if self.N != 2:
                raise NotImplementedError("curved facet masses need N <= 2")
            p0 = np.array([float(c) for c in f.points[0]])
            p1 = np.array([float(c) for c in f.points[1]])
            L = np.linalg.norm(p1 - p0)
            n_src = np.array([float(c) for c in f.normal])
            scale = L / np.linalg.norm(n_src) * np.linalg.norm(n_src)  # dH on the source segment
            seg = lambda t: (p0 + t * (p1 - p0)).reshape(1, -1)
            total += _segment_mass(seg, 0.0, 1.0, self, d, inside,
                                   lambda X, fid=fid: self.F._cof_norm(fid, X) / np.linalg.norm(n_src) * L,
                                   xg, wg)
        return total


def _segment_mass(param, lo, hi, MC, density, inside, jac, xg, wg, n_scan=400):
    """Integrate ``density(F(param(t))) jac(param(t)) 1[inside]`` over ``t`` in ``[lo, hi]``."""
    ts = np.linspace(lo, hi, n_scan + 1)
    X = np.vstack([param(t) for t in ts])
    flags = inside(MC.F.map_points(X))
    cuts = [lo]
    for k in range(n_scan):
        if flags[k] != flags[k + 1]:
            def s(t):
                return 0.5 - float(inside(MC.F.map_points(param(t)))[0])
            # locate the switch with bisection on the indicator
            a, b = ts[k], ts[k + 1]
            for _ in range(80):
                m = 0.5 * (a + b)
                if inside(MC.F.map_points(param(m)))[0] == flags[k]:
                    a = m
                else:
                    b = m
            cuts.append(0.5 * (a + b))
    cuts.append(hi)
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        m = 0.5 * (a + b)
        if not inside(MC.F.map_points(param(m)))[0]:
            continue
        t = 0.5 * (b - a) * xg + m
        X = np.vstack([param(tt) for tt in t])
        Y = MC.F.map_points(X)
        total += 0.5 * (b - a) * float(np.dot(wg, density(Y) * jac(X)))
    return total


# ---------------------------------------------------------------------------
# charts, overlaps, partitions of unity


def subcomplex(C, cell_ids):
    """Sub-complex made of the given cells; returns ``(sub, parents)``."""
    cell_ids = list(cell_ids)
    used = sorted({v for c in cell_ids for v in C.cells[c].vertex_ids})
    index = {v: k for k, v in enumerate(used)}
    sub = CellComplex([C.vertices[v] for v in used], [[index[v] for v in C.cells[c].vertex_ids] for c in cell_ids])
    return sub, cell_ids


def restrict_measure(mu, sub, parents):
    ac = [mu.ac[p] for p in parents]
    jump = {}
    for f in sub.interior_facets:
        kind, idx = mu.complex.locate(f.barycenter)
        if kind == "facet" and idx in mu.jump:
            jump[f.id] = mu.jump[idx]
    return MeasureField(sub, ac, jump)


def restrict_function(h, sub, parents):
    return PiecewiseScalar(sub, [h.pieces[p] for p in parents], check=False)


@dataclass
class Chart:
    name: str
    complex: CellComplex
    metric: object = None
    gluing_axis: int = 0


@dataclass
class Overlap:
    """Overlap of charts ``alpha`` and ``beta`` with transition ``F: alpha -> beta``."""

    alpha: int
    beta: int
    cells_alpha: list
    cells_beta: list
    F: TransitionMap
    sub_alpha: CellComplex = None
    sub_beta: CellComplex = None

    @classmethod
    def build(cls, charts, alpha, beta, cells_alpha, cells_beta, components):
        if not cells_alpha or not cells_beta:
            raise CoverageGap(f"charts {alpha} and {beta} do not overlap")
        sa, _ = subcomplex(charts[alpha].complex, cells_alpha)
        sb, _ = subcomplex(charts[beta].complex, cells_beta)
        F = TransitionMap(sa, components, name=f"{charts[alpha].name}->{charts[beta].name}")
        if F.tier != "affine":
            raise ValueError("atlas transitions must be affine")
        if F.target.volume != sb.volume:
            raise IncompatibleComplexes("transition image does not match the declared overlap cells")
        return cls(alpha, beta, list(cells_alpha), list(cells_beta), F, sa, sb)


class AtlasScene:
    """Charts glued along overlaps, with metrics and a partition of unity."""

    def __init__(self, charts, overlaps=()):
        self.charts = list(charts)
        if len(self.charts) > 4:
            raise ValueError("at most four charts per scene")
        self.overlaps = list(overlaps)
        self._check_connected()
        self.partition = build_partition_of_unity(self)

    def _check_connected(self):
        n = len(self.charts)
        adj = {i: set() for i in range(n)}
        for ov in self.overlaps:
            adj[ov.alpha].add(ov.beta)
            adj[ov.beta].add(ov.alpha)
        seen, stack = {0}, [0]
        while stack:
            k = stack.pop()
            for j in adj[k] - seen:
                seen.add(j)
                stack.append(j)
        if len(seen) != n:
            raise CoverageGap("charts are not glued into one connected region")

    def transitions_from(self, alpha):
        """``(overlap, F, cells_in_alpha, cells_in_other)`` for overlaps involving ``alpha``."""
        out = []
        for ov in self.overlaps:
            if ov.alpha == alpha:
                out.append((ov, ov.F, ov.cells_alpha, ov.beta, ov.cells_beta))
            elif ov.beta == alpha:
                out.append((ov, ov.F.inverse_map(), ov.cells_beta, ov.alpha, ov.cells_alpha))
        return out


def _smoothstep(t):
    return t * t * (3 - 2 * t)


def _axis_range(C, axis, cells=None):
    cells = range(len(C.cells)) if cells is None else cells
    vals = [p[axis] for c in cells for p in C.cells[c].points]
    return min(vals), max(vals)


def build_partition_of_unity(scene, lattice=1000):
    """C^1 piecewise-cubic bumps ``psi_alpha`` summing to one.

    Each overlap is a slab along the chart's gluing axis touching one end of
    the chart; the bumps switch over the middle half of the slab.
    """
    if len(scene.charts) == 1:
        C = scene.charts[0].complex
        return [PiecewiseScalar.constant(C, 1)]
    bumps = []
    for a, chart in enumerate(scene.charts):
        C = chart.complex
        g = chart.gluing_axis
        L, R = _axis_range(C, g)
        zones = []
        for ov, F, cells_a, b, _ in scene.transitions_from(a):
            lo, hi = _axis_range(C, g, cells_a)
            if hi == R and lo > L:
                falling = True
            elif lo == L and hi < R:
                falling = False
            else:
                raise CoverageGap(f"overlap of chart {chart.name} does not sit at one end of its gluing axis")
            z0 = lo + (hi - lo) / 4
            z1 = hi - (hi - lo) / 4
            zones.append((z0, z1, falling))
        if not zones:
            raise CoverageGap(f"chart {chart.name} has no overlap")
        cuts = sorted({L, R} | {z for z0, z1, _ in zones for z in (z0, z1)})
        ranges = []
        for ax in range(C.N):
            ranges.append(cuts if ax == g else list(_axis_range(C, ax)))
        slabs = box_complex(ranges)
        Cr, _, _ = common_refinement(C, slabs)
        x = Fn.var(C.N, g)
        pieces = []
        for cell in Cr.cells:
            xc = cell.barycenter[g]
            piece = Fn.const(C.N, 1)
            for z0, z1, falling in zones:
                if z0 < xc < z1:
                    t = (x - z0) * (1 / (z1 - z0))
                    s = _smoothstep(t)
                    piece = piece * (1 - s if falling else s)
                elif (xc >= z1) == falling:
                    piece = piece * 0
            pieces.append(piece)
        bumps.append(PiecewiseScalar(Cr, pieces, check=False))
    _verify_partition(scene, bumps, lattice)
    for psi in bumps:
        if not psi.flags.is_DC0:
            raise AssertionError("partition bump is not C^1")
    return bumps


def _verify_partition(scene, bumps, lattice):
    """Exact check of ``sum psi = 1`` on a rational lattice of each chart."""
    for a, chart in enumerate(scene.charts):
        C = chart.complex
        per = max(2, int(round(lattice ** (1.0 / C.N))))
        axes = []
        for i in range(C.N):
            lo, hi = _axis_range(C, i)
            axes.append([lo + (hi - lo) * Fraction(2 * k + 1, 2 * per) for k in range(per)])
        trans = scene.transitions_from(a)
        for p in iproduct(*axes):
            try:
                if C.locate(p)[0] == "skeleton":
                    continue
                total = bumps[a].precise_value(p)
                for ov, F, cells_a, b, _ in trans:
                    try:
                        kind, idx = F.source.locate(p)
                    except ValueError:
                        continue
                    if kind == "skeleton":
                        raise UndefinedOnLowerSkeleton
                    cid = idx if kind == "cell" else F.source.facets[idx].minus
                    y = tuple(c.pieces[cid].at(p) for c in F.components)
                    total += bumps[b].precise_value(y)
            except (UndefinedOnLowerSkeleton, ValueError):
                continue
            if total != 1:
                raise CoverageGap(
                    f"partition of unity sums to {float(total)} at {tuple(map(float, p))} in chart {chart.name}"
                )


# ---------------------------------------------------------------------------
# systems of measures


def check_system(scene, system, tol=1e-9):
    """Verify ``F*(mu_beta) = mu_alpha`` on every overlap; returns the worst residual."""
    worst = 0
    for ov in scene.overlaps:
        ma = restrict_measure(system[ov.alpha], ov.sub_alpha, ov.cells_alpha)
        mb = restrict_measure(system[ov.beta], ov.sub_beta, ov.cells_beta)
        pulled = ov.F.pullback_measure(mb.on(ov.F.target))
        r = measure_residual(pulled, ma)
        worst = max(worst, r)
        if r > tol:
            raise IncompatibleSystem(
                f"charts {scene.charts[ov.alpha].name}/{scene.charts[ov.beta].name}: residual {r:g}"
            )
    return worst


def _cells_mass(mu, halfspaces, cells, rule):
    """Mass of ``mu`` over a polytope intersected with a set of cells."""
    from math import factorial

    from .cellgeom import integrate_simplex, simplex_volume

    cells = set(cells)
    C = mu.complex
    total = 0
    for cid in cells:
        if mu.ac[cid].kind == EXACT and mu.ac[cid].value == 0:
            continue
        for s in C.clip_cell(cid, halfspaces):
            total = total + integrate_simplex(s, mu.ac[cid], simplex_volume(s) * factorial(C.N), rule)
    for fid, d in mu.jump.items():
        f = C.facets[fid]
        if f.minus in cells and f.plus in cells:
            for s, fac in C.clip_facet(fid, halfspaces):
                total = total + integrate_simplex(s, d, fac, rule)
    return total


def _refined_parents(C, Cr):
    out = []
    for cell in Cr.cells:
        kind, idx = C.locate(cell.barycenter)
        out.append(idx)
    return out


def global_measure(scene, system, chart, lo, hi, rule=None, check=True, tol=1e-9):
    """Mass of a coordinate box of chart ``chart`` under the induced global measure.

    The value ``sum_alpha int psi_alpha sqrt(det G_alpha) d mu_alpha`` is
    returned together with the direct value from every chart that contains
    the whole box.
    """
    if check:
        check_system(scene, system, tol)
    box = box_halfspaces(lo, hi)
    weighted = []
    for a, ch in enumerate(scene.charts):
        sq = ch.metric.sqrt_det() if ch.metric is not None else PiecewiseScalar.constant(ch.complex, 1)
        weighted.append((sq, system[a]))
    # partition route
    part = 0
    for a, ch in enumerate(scene.charts):
        sq, mu = weighted[a]
        psi = scene.partition[a]
        m = multiply(psi * sq, mu)
        parents = _refined_parents(ch.complex, m.complex)
        if a == chart:
            part = part + _cells_mass(m, box, range(len(m.complex.cells)), rule)
            continue
        for ov, F, cells_other, b, cells_a in scene.transitions_from(a):
            if b != chart:
                continue
            # F maps alpha's overlap to the box chart; map the box back into alpha
            back = F.inverse_map() if F.source.same_as(ov.sub_alpha) or F.source.same_as(ov.sub_beta) else None
            hs = back.map_halfspaces(box)
            allowed = [k for k, p in enumerate(parents) if p in set(cells_other)]
            part = part + _cells_mass(m, hs, allowed, rule)
    # direct route
    direct = {}
    ch0 = scene.charts[chart]
    sq, mu = weighted[chart]
    direct[ch0.name] = _cells_mass(multiply(sq, mu), box, range(len(ch0.complex.cells)), rule)
    box_vol = _box_volume_in(ch0.complex, box, range(len(ch0.complex.cells)))
    for ov, F, cells_c, b, cells_b in scene.transitions_from(chart):
        if _box_volume_in(ch0.complex, box, cells_c) != box_vol:
            continue
        sqb, mub = weighted[b]
        hs = F.map_halfspaces(box)
        val = _cells_mass(multiply(sqb, mub), hs, cells_b, rule)
        direct[f"{scene.charts[b].name} via {F.name}"] = val
    vals = [float(part)] + [float(v) for v in direct.values()]
    return {"partition": part, "direct": direct, "spread": max(vals) - min(vals)}


def _box_volume_in(C, box, cells):
    from .cellgeom import simplex_volume

    return sum((simplex_volume(s) for c in cells for s in C.clip_cell(c, box)), Fraction(0))


def starpush_check(F, mu_t, G_source=None, G_target=None, boxes=()):
    """Check ``F_#(sqrt(det G) F*(mu)) = sqrt(det G~) mu`` on the target."""
    from .tensorcalc import pullback_metric

    if G_target is None:
        raise ValueError("target metric required")
    Gs = G_source if G_source is not None else pullback_metric(F, G_target)
    mu = F.pullback_measure(mu_t)
    lhs = F.pushforward(multiply(Gs.sqrt_det(), mu))
    rhs = multiply(G_target.sqrt_det(), _on_target(mu_t, F.target))
    out = {"residual": measure_residual(lhs, rhs) if not isinstance(F.target, MappedComplex) else None,
           "lhs": lhs, "rhs": rhs, "boxes": []}
    for lo, hi in boxes:
        hs = box_halfspaces(lo, hi)
        if isinstance(F.target, MappedComplex):
            a, b = F.target.mass_in(lhs, hs), F.target.mass_in(rhs, hs)
        else:
            a, b = lhs.mass_in(hs), rhs.mass_in(hs)
        out["boxes"].append((a, b))
    if out["residual"] is None:
        out["residual"] = max((abs(float(a) - float(b)) for a, b in out["boxes"]), default=0.0)
    return out
