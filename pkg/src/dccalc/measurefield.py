"""Radon measures made of a cellwise absolutely continuous part and facet jumps.

A :class:`MeasureField` stores, per top cell, a density with respect to
Lebesgue measure, and per interior facet a density with respect to the
complex's reference facet measure (``H^{N-1}/|n|`` on flat facets, see
:mod:`dccalc.cellgeom`).  Vector or matrix valued measures are plain
sequences of scalar fields sharing a complex.
"""

from contextlib import contextmanager
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np
from scipy.integrate import quad

from .algebra import EXACT, NUMERIC, Fn
from .cellgeom import QuadratureRule, common_refinement
from .errors import BothFactorsJump, IllegalPairing
from .pwalg import PiecewiseScalar, facet_restriction


def _zero_on_facet(fn, complex, fid):
    if fn.kind == EXACT and fn.value == 0:
        return True
    if fn.kind == NUMERIC:
        return False
    return bool(facet_restriction(fn, complex, fid).is_zero())


class MeasureField:
    """Scalar Radon measure ``sum_c rho_c L^N|_c + sum_F j_F mu_F``.

    Parameters
    ----------
    complex : CellComplex or MappedComplex
    ac : list of Fn or None
        Lebesgue densities per cell (``None`` means zero).
    jump : dict, optional
        Facet id -> density w.r.t. the reference facet measure.
    """

    def __init__(self, complex, ac, jump=None):
        self.complex = complex
        N = complex.N
        if len(ac) != len(complex.cells):
            raise ValueError("need one ac density per cell")
        self.ac = [Fn.const(N, 0) if a is None else (a if isinstance(a, Fn) else Fn.const(N, a)) for a in ac]
        self.jump = {}
        for fid, d in (jump or {}).items():
            if complex.facets[fid].is_boundary:
                raise ValueError(f"jump density on boundary facet {fid}")
            d = d if isinstance(d, Fn) else Fn.const(N, d)
            if not _zero_on_facet(d, complex, fid):
                self.jump[fid] = d

    @classmethod
    def zero(cls, complex):
        return cls(complex, [None] * len(complex.cells))

    @classmethod
    def lebesgue(cls, complex, density=1):
        return cls(complex, [density] * len(complex.cells))

    @property
    def N(self):
        return self.complex.N

    @property
    def is_GM0(self):
        return not self.jump

    @property
    def is_exact(self):
        return all(a.kind == EXACT for a in self.ac) and all(d.kind == EXACT for d in self.jump.values())

    def jump_density(self, fid):
        return self.jump.get(fid, Fn.const(self.N, 0))

    def hausdorff_jump(self, fid):
        """Jump density with respect to ``H^{N-1}`` (numeric factor on slanted facets)."""
        return self.complex.facets[fid].to_hausdorff(self.jump_density(fid))

    # -- algebra ----------------------------------------------------------------
    def on(self, complex):
        """Re-express on a refinement of this field's complex."""
        if complex.same_as(self.complex):
            return self
        ac = []
        for cell in complex.cells:
            kind, idx = self.complex.locate(cell.barycenter)
            if kind != "cell":
                raise ValueError("target is not a refinement")
            ac.append(self.ac[idx])
        jump = {}
        for f in complex.interior_facets:
            kind, idx = self.complex.locate(f.barycenter)
            if kind == "facet" and idx in self.jump:
                old = self.complex.facets[idx]
                # same hyperplane: the primitive normals agree up to sign
                jump[f.id] = self.jump[idx]
        return MeasureField(complex, ac, jump)

    def _aligned(self, other):
        if self.complex.same_as(other.complex):
            return self, other.on(self.complex) if other.complex is not self.complex else other
        C, _, _ = common_refinement(self.complex, other.complex)
        return self.on(C), other.on(C)

    def __add__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return self
        a, b = self._aligned(other)
        ac = [x + y for x, y in zip(a.ac, b.ac)]
        jump = dict(a.jump)
        for fid, d in b.jump.items():
            jump[fid] = jump[fid] + d if fid in jump else d
        return MeasureField(a.complex, ac, jump)

    __radd__ = __add__

    def __neg__(self):
        return MeasureField(self.complex, [-a for a in self.ac], {k: -v for k, v in self.jump.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        """Multiply by a constant."""
        return MeasureField(self.complex, [a * c for a in self.ac], {k: v * c for k, v in self.jump.items()})

    def __mul__(self, c):
        if isinstance(c, (PiecewiseScalar, MeasureField)):
            raise TypeError("use multiply(h, mu) for function times measure")
        return self.scale(c)

    __rmul__ = __mul__

    def is_zero(self):
        return all(a.is_zero() for a in self.ac) and not self.jump

    # -- integration ------------------------------------------------------------
    def pair(self, phi, rule=None):
        """``<mu, phi>`` for a smooth density ``phi`` or a PiecewiseScalar (precise values on facets)."""
        total = 0
        for cell in self.complex.cells:
            p = phi.pieces[cell.id] if isinstance(phi, PiecewiseScalar) else phi
            if _trivially_zero(self.ac[cell.id]):
                continue
            total = total + self.complex.integrate_cell(cell.id, self.ac[cell.id] * p, rule)
        for fid, d in self.jump.items():
            p = phi.precise_trace(fid) if isinstance(phi, PiecewiseScalar) else phi
            total = total + self.complex.integrate_facet(fid, d * p, rule)
        return total

    def total_mass(self, rule=None):
        return self.pair(Fn.const(self.N, 1), rule)

    def mass_in(self, halfspaces, rule=None):
        """Mass of the polytope ``{a.x <= b}`` (closed; facet masses counted once)."""
        from .cellgeom import integrate_simplex, simplex_volume
        from math import factorial

        total = 0
        for cell in self.complex.cells:
            if _trivially_zero(self.ac[cell.id]):
                continue
            for s in self.complex.clip_cell(cell.id, halfspaces):
                vol = simplex_volume(s) * factorial(self.N)
                total = total + integrate_simplex(s, self.ac[cell.id], vol, rule)
        for fid, d in self.jump.items():
            for s, fac in self.complex.clip_facet(fid, halfspaces):
                total = total + integrate_simplex(s, d, fac, rule)
        return total

    def mass_in_box(self, lo, hi, rule=None):
        from .cellgeom import box_halfspaces

        return self.mass_in(box_halfspaces(lo, hi), rule)

    # -- dump -------------------------------------------------------------------
    def to_dict(self):
        def enc(fn):
            if fn.kind == NUMERIC:
                return "<numeric>"
            return str(fn.to_expr())

        return {
            "ac": [{"cell": i, "density": enc(a)} for i, a in enumerate(self.ac)],
            "jump": [
                {"facet": fid, "density": enc(d), "normal": [str(c) for c in self.complex.facets[fid].normal]}
                for fid, d in sorted(self.jump.items())
            ],
        }

    def __repr__(self):
        return f"MeasureField(ac={self.ac}, jump={self.jump})"


def _trivially_zero(fn):
    return fn.kind == EXACT and fn.value == 0


# ---------------------------------------------------------------------------
# operations


def derivative(f, i):
    """Distributional derivative ``D_i f`` of a piecewise function."""
    C = f.complex
    ac = [p.diff(i) for p in f.pieces]
    jump = {}
    for fac in C.interior_facets:
        if fac.id not in f.jump_facets:
            continue
        jump[fac.id] = f.jump(fac.id) * C.facet_normal_density(fac.id, i)
    return MeasureField(C, ac, jump)


def gradient_measure(f):
    return [derivative(f, i) for i in range(f.N)]


def multiply(h, mu, precise=False):
    """``h * mu`` for a bounded piecewise function ``h``.

    On facets where ``h`` jumps and ``mu`` charges the facet the pairing is
    refused unless ``precise=True``, in which case the precise value
    ``(h+ + h-)/2`` is used.
    """
    if not isinstance(h, PiecewiseScalar):
        h = PiecewiseScalar(mu.complex, [h if isinstance(h, Fn) else Fn.const(mu.N, h)] * len(mu.complex.cells), check=False)
    if not h.complex.same_as(mu.complex):
        C, _, _ = common_refinement(h.complex, mu.complex)
        h, mu = h.on(C), mu.on(C)
    elif h.complex is not mu.complex:
        h = PiecewiseScalar(mu.complex, h.pieces, check=False)
    ac = [p * a for p, a in zip(h.pieces, mu.ac)]
    jumps = h.jump_facets
    jump = {}
    for fid, d in mu.jump.items():
        if fid in jumps and not precise:
            raise IllegalPairing(
                f"function jumps on facet {fid} where the measure has a jump part"
            )
        jump[fid] = h.precise_trace(fid) * d
    return MeasureField(mu.complex, ac, jump)


def product_rule(f, h, i):
    """``f D_i h + h D_i f``; requires that f and h never jump on a common facet."""
    if f.complex.same_as(h.complex):
        ff, hh = f, PiecewiseScalar(f.complex, h.pieces, check=False)
    else:
        C, _, _ = common_refinement(f.complex, h.complex)
        ff, hh = f.on(C), h.on(C)
    common = ff.jump_facets & hh.jump_facets
    if common:
        raise BothFactorsJump(f"both factors jump on facets {sorted(common)}")
    return multiply(ff, derivative(hh, i)) + multiply(hh, derivative(ff, i))


_TIER = {"numeric": False}


@contextmanager
def numeric_tier(enabled=True):
    """Within the block, measure comparisons always go through quadrature."""
    old = _TIER["numeric"]
    _TIER["numeric"] = enabled
    try:
        yield
    finally:
        _TIER["numeric"] = old


def measure_residual(mu, nu, qmax=6, rule=None):
    """Largest relative discrepancy of ``<mu - nu, phi>`` over a polynomial panel.

    The panel is every monomial of degree ``<= qmax`` in coordinates local to
    each cell/facet.  When the difference is exactly zero the result is the
    exact integer 0.
    """
    d = mu - nu
    C = d.complex
    if not _TIER["numeric"] and not d.jump and all(a.is_zero() is True for a in d.ac):
        return 0
    N = C.N
    rule = rule or QuadratureRule.of_order(max(24, 2 * qmax + 8))
    monos = _monomials(N, qmax)
    worst = 0.0
    scale = 1.0
    mu_a, nu_a = mu.on(C), nu.on(C)
    for cell in C.cells:
        P, W = C.cell_nodes(cell.id, rule)
        ctr = P.mean(axis=0)
        span = np.ptp(P, axis=0).max() or 1.0
        Y = (P - ctr) / span
        V = np.stack([np.prod(Y ** np.array(m), axis=1) for m in monos], axis=1)
        dv = _eval(d.ac[cell.id], P)
        worst = max(worst, np.max(np.abs((W * dv) @ V)))
        for field_ in (mu_a, nu_a):
            scale = max(scale, np.max(np.abs((W * _eval(field_.ac[cell.id], P)) @ V)))
    for f in C.interior_facets:
        dj = d.jump.get(f.id)
        if dj is None and f.id not in mu_a.jump and f.id not in nu_a.jump:
            continue
        P, W = C.facet_nodes(f.id, rule)
        ctr = P.mean(axis=0)
        span = np.ptp(P, axis=0).max() or 1.0
        Y = (P - ctr) / span
        V = np.stack([np.prod(Y ** np.array(m), axis=1) for m in monos], axis=1)
        if dj is not None:
            worst = max(worst, np.max(np.abs((W * _eval(dj, P)) @ V)))
        for field_ in (mu_a, nu_a):
            if f.id in field_.jump:
                scale = max(scale, np.max(np.abs((W * _eval(field_.jump[f.id], P)) @ V)))
    return float(worst / scale)


def _eval(fn, P):
    if fn.kind == EXACT and fn.value == 0:
        return np.zeros(len(P))
    return fn(P)


def _monomials(N, q):
    out = []
    for deg in range(q + 1):
        for combo in combinations_with_replacement(range(N), deg):
            e = [0] * N
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


def weak_derivative_pairing(f, i, phi, rule=None):
    """``-int f d_i phi`` computed directly by cell integration."""
    total = 0
    dphi = phi.diff(i)
    for cell in f.complex.cells:
        total = total + f.complex.integrate_cell(cell.id, f.pieces[cell.id] * dphi, rule)
    return -total


def total_variation(components):
    """Total variation of a vector measure given as a sequence of scalar fields."""
    comps = list(components)
    C = comps[0].complex
    for m in comps[1:]:
        if not m.complex.same_as(C):
            C, _, _ = common_refinement(C, m.complex)
    comps = [m.on(C) for m in comps]
    ac = []
    for cell in C.cells:
        sq = sum((m.ac[cell.id] ** 2 for m in comps), Fn.const(C.N, 0))
        ac.append(sq.sqrt(sample=cell.barycenter) if sq.kind == EXACT else sq.sqrt())
    jump = {}
    fids = set().union(*[set(m.jump) for m in comps])
    for fid in fids:
        sq = sum((m.jump_density(fid) ** 2 for m in comps), Fn.const(C.N, 0))
        bary = C.facets[fid].barycenter
        jump[fid] = sq.sqrt(sample=bary) if sq.kind == EXACT else sq.sqrt()
    return MeasureField(C, ac, jump)


def pullback_measure(F, mu):
    """Pull back ``mu`` (on F's target) to F's source complex."""
    return F.pullback_measure(mu)


def pushforward(F, mu):
    """Push ``mu`` (on F's source) forward to F's target complex."""
    return F.pushforward(mu)


# ---------------------------------------------------------------------------
# mollification harness


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


_BUMP_MASS = quad(lambda s: float(_bump(np.array([s]))[0]), -1, 1, epsabs=1e-14, epsrel=1e-14)[0]


def mollifier_1d(eps):
    """Standard smooth even mollifier supported in ``[-eps, eps]``."""
    return lambda z: _bump(np.asarray(z) / eps) / (eps * _BUMP_MASS)


def mollify_and_converge_test(h, mu, eps_seq, panel=None, order=40):
    """Decay table of ``|<h mu_eps - h mu, phi>|`` over a panel of test functions.

    ``mu_eps`` is the convolution of ``mu`` with a product mollifier.  The
    pairing uses ``<h mu_eps, phi> = <mu, K_eps(h phi)>`` with
    ``K_eps g(y) = int g(x) rho_eps(x - y) dx``, evaluated by Gauss quadrature
    on each cell piece of the mollifier support.

    Parameters
    ----------
    h : PiecewiseScalar
    mu : MeasureField
    eps_seq : sequence of float
    panel : list of callables ``phi(points) -> values``; defaults to
        ``1, x, cos(x)`` type functions in the first coordinate.
    """
    N = mu.N
    if panel is None:
        panel = [
            lambda P: np.ones(len(P)),
            lambda P: P[:, 0],
            lambda P: np.cos(P[:, 0]),
            lambda P: 1.0 / (2.0 + np.sum(P ** 2, axis=1)),
        ]
    limit_precise = any(fid in h.jump_facets for fid in mu.jump)
    hmu = multiply(h, mu, precise=limit_precise)
    rule = QuadratureRule.of_order(16)
    xg, wg = np.polynomial.legendre.leggauss(order)
    # nodes of mu (ac + jump) with weights
    nodes, weights = [], []
    for cell in mu.complex.cells:
        P, W = mu.complex.cell_nodes(cell.id, rule)
        nodes.append(P)
        weights.append(W * _eval(mu.ac[cell.id], P))
    for fid, d in mu.jump.items():
        P, W = mu.complex.facet_nodes(fid, rule)
        nodes.append(P)
        weights.append(W * d(P))
    Y = np.vstack(nodes)
    WY = np.concatenate(weights)
    breaks = _breakpoints(h.complex, 0) if N == 1 else None
    rows = []
    for eps in eps_seq:
        eta = mollifier_1d(eps)
        errs = []
        for phi in panel:
            target = _pair_numeric(hmu, phi, rule)
            K = np.zeros(len(Y))
            for k, y in enumerate(Y):
                if N == 1:
                    K[k] = _kernel_1d(h, phi, eta, y[0], eps, breaks, xg, wg)
                else:
                    K[k] = _kernel_nd(h, phi, eta, y, eps, xg[: order // 2], wg[: order // 2])
            errs.append(abs(float(np.dot(WY, K)) - target))
        rows.append({"eps": float(eps), "max_error": max(errs), "errors": errs})
    return {"rows": rows, "converges": all(b["max_error"] <= a["max_error"] + 1e-15 for a, b in zip(rows, rows[1:]))}


def _pair_numeric(m, phi, rule):
    total = 0.0
    for cell in m.complex.cells:
        P, W = m.complex.cell_nodes(cell.id, rule)
        total += float(np.dot(W, _eval(m.ac[cell.id], P) * phi(P)))
    for fid, d in m.jump.items():
        P, W = m.complex.facet_nodes(fid, rule)
        total += float(np.dot(W, d(P) * phi(P)))
    return total


def _breakpoints(C, axis):
    return sorted({float(v[axis]) for v in C.vertices})


def _kernel_1d(h, phi, eta, y, eps, breaks, xg, wg):
    lo, hi = y - eps, y + eps
    cuts = [lo] + [b for b in breaks if lo < b < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        x = 0.5 * (b - a) * xg + 0.5 * (a + b)
        P = x.reshape(-1, 1)
        vals = h(P)
        vals = np.where(np.isnan(vals), 0.0, vals)  # outside the domain
        total += 0.5 * (b - a) * float(np.dot(wg, vals * phi(P) * eta(x - y)))
    return total


def _kernel_nd(h, phi, eta, y, eps, xg, wg):
    N = len(y)
    grids = np.meshgrid(*[y[i] + eps * xg for i in range(N)], indexing="ij")
    P = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack(np.meshgrid(*[wg * eps] * N, indexing="ij"), axis=0).reshape(N, -1), axis=0)
    vals = h(P)
    vals = np.where(np.isnan(vals), 0.0, vals)
    ker = np.prod([eta(P[:, i] - y[i]) for i in range(N)], axis=0)
    return float(np.dot(W, vals * phi(P) * ker))
