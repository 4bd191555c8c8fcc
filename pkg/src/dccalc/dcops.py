"""Gradient, Hessian and Laplacian of DC functions and the identity checks built on them."""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iproduct

import numpy as np
import sympy

from .algebra import EXACT, SYMBOLIC, Fn, symbols
from .cellgeom import QuadratureRule
from .connection import covariant_derivative_vector
from .errors import NotDC0, SamplePointOnSkeleton, SupportViolation
from .measurefield import MeasureField, derivative, measure_residual, multiply, product_rule
from .pwalg import PiecewiseScalar, facet_restriction
from .tensorcalc import CovariantTensor, VectorField, evaluate


def _sum(items):
    out = None
    for it in items:
        out = it if out is None else out + it
    return out


def gradient(f, G):
    """``grad f`` with components ``sum_j g^{ij} d_j f``."""
    inv = G.inverse()
    N = f.N
    d = [f.partial(j) for j in range(N)]
    return VectorField([_sum(inv[i][j] * d[j] for j in range(N)) for i in range(N)])


def metric_inner(G, X, Y):
    """``g(X, Y)`` for function-valued vector fields."""
    N = G.N
    return _sum(G.g[i][j] * X[i] * Y[j] for i in range(N) for j in range(N))


def df_of(f, Y):
    """``df(Y) = sum_j d_j f Y^j`` as a piecewise function."""
    return _sum(f.partial(j) * Y[j] for j in range(f.N))


@dataclass
class HessianResult:
    """Hessian measure of a DC function with its structural checks."""

    tensor: CovariantTensor
    symmetric: bool
    symmetry_residual: float
    rank_one_residual: float
    jump_facets: frozenset = field(default_factory=frozenset)

    def __getitem__(self, ij):
        return self.tensor[ij]


def hessian(f, Gamma):
    """``(Hess f)_ij = D_i(d_j f) - sum_k d_k f Gamma^k_ij`` (precise values of ``d_k f``)."""
    N = f.N
    d = [f.partial(k) for k in range(N)]
    comps = {}
    for i, j in iproduct(range(N), repeat=2):
        acc = derivative(d[j], i)
        for k in range(N):
            acc = acc - multiply(d[k], Gamma[k, i, j], precise=True)
        comps[i, j] = acc
    T = CovariantTensor(2, comps, "GM", N)
    sym = 0
    for i in range(N):
        for j in range(i + 1, N):
            sym = max(sym, measure_residual(comps[i, j], comps[j, i]))
    jf = frozenset().union(*[set(c.jump) for c in comps.values()])
    return HessianResult(T, sym == 0 or sym <= 1e-12, sym, _rank_one_residual(T, jf), jf)


def _rank_one_residual(T, facets, order=6):
    """``max |d_ij - lambda nu_i nu_j|`` over facet nodes, ``lambda = d(nu, nu)``."""
    C = T.complex
    N = T.N
    rule = QuadratureRule.of_order(order)
    worst = 0.0
    for fid in facets:
        f = C.facets[fid]
        P, _ = C.facet_nodes(fid, rule)
        nu = np.array([float(c) for c in f.normal])
        nu = nu / np.linalg.norm(nu)
        D = np.zeros((len(P), N, N))
        for (i, j), comp in T.components.items():
            if fid in comp.jump:
                D[:, i, j] = comp.jump[fid](P)
        lam = np.einsum("mij,i,j->m", D, nu, nu)
        worst = max(worst, float(np.max(np.abs(D - lam[:, None, None] * np.outer(nu, nu)[None]))))
    return worst


def hessian_identity_check(f, X, Y, Gamma):
    """Compare ``Hess f(X, Y)`` with ``D(df(Y))(X) - df(D_X Y)``.

    Every product uses precise representatives on facets.  The report lists
    the facets of each jump configuration: where only ``Y`` jumps, where only
    ``d f`` jumps, and where both do.
    """
    N = f.N
    H = hessian(f, Gamma)
    lhs = evaluate(H.tensor, X, Y, precise=True)
    dfY = df_of(f, Y)
    first = _sum(multiply(X[i], derivative(dfY, i), precise=True) for i in range(N))
    DY = covariant_derivative_vector(Y, Gamma)
    DXY = [_sum(multiply(X[j], DY[j][s], precise=True) for j in range(N)) for s in range(N)]
    second = _sum(multiply(f.partial(s), DXY[s], precise=True) for s in range(N))
    rhs = first - second
    J_Y = set(Y.jump_facets)
    J_df = set().union(*[f.partial(k).jump_facets for k in range(N)])
    return {
        "residual": measure_residual(lhs, rhs),
        "lhs": lhs,
        "rhs": rhs,
        "cases": {
            "Y_only": sorted(J_Y - J_df),
            "df_only": sorted(J_df - J_Y),
            "both": sorted(J_Y & J_df),
        },
    }


def laplacian_trace(f, G, Gamma=None):
    """``sum_ij g^{ij} (Hess f)_ij`` as a chart measure."""
    from .connection import christoffel

    Gamma = Gamma if Gamma is not None else christoffel(G)
    H = hessian(f, Gamma)
    inv = G.inverse()
    N = f.N
    return _sum(multiply(inv[i][j], H[i, j]) for i in range(N) for j in range(N))


def laplacian_divergence(f, G):
    """``(1/sqrt det G) sum_i D_i(g^{ij} sqrt det G d_j f)``."""
    sq = G.sqrt_det()
    inv = G.inverse()
    N = f.N
    flux = _sum(product_rule(inv[i][j] * sq, f.partial(j), i) for i in range(N) for j in range(N))
    return multiply(1 / sq, flux)


def _integrate(h, rule=None):
    """Integral of a piecewise function over its complex."""
    C = h.complex
    return sum((C.integrate_cell(c.id, h.pieces[c.id], rule) for c in C.cells), 0)


def _check_support(psi, rule_order=6):
    if not psi.flags.is_continuous:
        raise SupportViolation("test function must be continuous")
    C = psi.complex
    rule = QuadratureRule.of_order(rule_order)
    for f in C.boundary_facets:
        piece = psi.pieces[f.minus]
        if piece.kind != "numeric":
            z = facet_restriction(piece, C, f.id).is_zero()
            if z is True:
                continue
            if z is False:
                raise SupportViolation(f"test function does not vanish on boundary facet {f.id}")
        P, _ = C.facet_nodes(f.id, rule)
        if np.max(np.abs(piece(P))) > 1e-12:
            raise SupportViolation(f"test function does not vanish on boundary facet {f.id}")


def _rel(a, b):
    if isinstance(a, Fraction) and isinstance(b, Fraction) or (a == b):
        if a == b:
            return 0
    a, b = float(a), float(b)
    return abs(a - b) / max(1.0, abs(a), abs(b))


def ibp_check(f, psi, G, Gamma=None, rule=None):
    """``int g(grad f, grad psi) dv_g`` versus ``-<Delta^g f, psi>``."""
    _check_support(psi)
    N = f.N
    sq = G.sqrt_det()
    inv = G.inverse()
    integrand = _sum(inv[i][j] * f.partial(i) * psi.partial(j) for i in range(N) for j in range(N)) * sq
    lhs = _integrate(integrand, rule)
    lap = laplacian_trace(f, G, Gamma)
    vol = multiply(sq, lap)
    p = psi if psi.complex.same_as(vol.complex) else psi.on(vol.complex)
    p = PiecewiseScalar(vol.complex, p.pieces, check=False)
    rhs = -vol.pair(p, rule)
    return {"residual": _rel(lhs, rhs), "lhs": lhs, "rhs": rhs}


def geod_identity_check(psi, G, Gamma):
    """``D_{grad psi} grad psi`` versus ``1/2 grad |grad psi|^2`` as vector measures."""
    N = psi.N
    X = gradient(psi, G)
    DX = covariant_derivative_vector(X, Gamma)
    lhs = [_sum(multiply(X[j], DX[j][s], precise=True) for j in range(N)) for s in range(N)]
    n2 = df_of(psi, X)
    dn2 = [derivative(n2, k) for k in range(N)]
    inv = G.inverse()
    rhs = [_sum(multiply(inv[s][k], dn2[k]) for k in range(N)).scale(Fraction(1, 2)) for s in range(N)]
    res = max(measure_residual(a, b) for a, b in zip(lhs, rhs))
    return {"residual": res, "lhs": lhs, "rhs": rhs, "norm_squared": n2}


def gamma2_check(v, u, psi, G, Gamma, rule=None):
    """Sum of the four terms of the Bochner-type integration by parts; must vanish.

    ``int psi Hess v(grad u, grad u) + int psi g(grad v, grad u) dDelta u
    + 1/2 int psi g(grad v, grad |grad u|^2) + int g(grad v, grad u) g(grad u, grad psi)``,
    every measure weighted by ``sqrt det G``.
    """
    if not u.flags.is_DC0:
        raise NotDC0("u must have a continuous gradient")
    _check_support(psi)
    N = v.N
    sq = G.sqrt_det()
    gu, gv = gradient(u, G), gradient(v, G)

    def integrate_against(m):
        m = multiply(sq, m, precise=True)
        p = psi.on(m.complex) if not psi.complex.same_as(m.complex) else psi
        return m.pair(PiecewiseScalar(m.complex, p.pieces, check=False), rule)

    H = hessian(v, Gamma)
    t1 = integrate_against(evaluate(H.tensor, gu, gu, precise=True))
    w = df_of(v, gu)
    t2 = integrate_against(multiply(w, laplacian_trace(u, G, Gamma), precise=True))
    n2 = df_of(u, gu)
    t3 = integrate_against(_sum(multiply(gv[k], derivative(n2, k), precise=True) for k in range(N)).scale(Fraction(1, 2)))
    t4 = _integrate(w * df_of(psi, gu) * sq, rule)
    terms = [t1, t2, t3, t4]
    total = sum(terms, 0)
    scale = max([1.0] + [abs(float(t)) for t in terms])
    res = 0 if total == 0 else abs(float(total)) / scale
    return {"residual": res, "terms": terms, "sum": total}


# ---------------------------------------------------------------------------
# Taylor expansion


def _exact_at(fn, point, digits=60):
    """High-accuracy value at a rational point (Fraction, or sympy Float)."""
    if fn.kind == EXACT:
        return fn.at(point)
    if fn.kind == SYMBOLIC:
        sub = {s: sympy.Rational(c.numerator, c.denominator) for s, c in zip(symbols(fn.n), point)}
        return fn.value.subs(sub).evalf(digits)
    return fn([float(c) for c in point])


def _to_fraction(x, limit=10**12):
    return Fraction(x).limit_denominator(limit)


def sample_interior_points(complex, n, seed=0, margin=0.15):
    """Random points with every barycentric coordinate of some cell simplex ``>= margin``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        cell = complex.cells[rng.integers(len(complex.cells))]
        s = cell.simplices[rng.integers(len(cell.simplices))]
        lam = rng.dirichlet(np.ones(len(s)))
        lam = margin + (1 - margin * len(s)) * lam
        lam = [_to_fraction(float(x), 1000) for x in lam]
        lam[-1] = 1 - sum(lam[:-1])
        p = tuple(sum(l * v[i] for l, v in zip(lam, s)) for i in range(complex.N))
        if complex.locate(p)[0] == "cell":
            out.append(p)
    return out


def _in_domain(C, y):
    try:
        C.locate(tuple(_to_fraction(float(c)) for c in y))
    except ValueError:
        return False
    return True


def taylor_check(f, G, Gamma, points=None, radii=(Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000), Fraction(1, 10000)),
                 n_points=50, n_dirs=4, seed=0):
    """Second-order expansion along approximate geodesics at interior points.

    From ``x`` the curve ``y(r) = x + r w - r^2/2 Gamma(w, w)`` is used with
    ``w`` a unit vector for ``g(x)``.  The ratio
    ``|f(y) - f(x) - r df(w) - r^2/2 Hess^ac f(w, w)| / (r |w|_g)^2`` must drop
    by at least a factor two per radius decade (a zero remainder passes).
    """
    C = f.complex
    N = f.N
    if points is None:
        points = sample_interior_points(C, n_points, seed)
    H = hessian(f, Gamma)
    rng = np.random.default_rng(seed + 1)
    rows = []
    ok = True
    for x in points:
        x = tuple(Fraction(c) for c in x)
        kind, cid = C.locate(x)
        if kind != "cell":
            raise SamplePointOnSkeleton(f"sample point {tuple(map(float, x))} is not interior to a cell")
        Gx = np.array([[float(_exact_at(G.g[i][j].pieces[cid], x)) for j in range(N)] for i in range(N)])
        gam = {(k, i, j): _exact_at(Gamma[k, i, j].on(C).ac[cid], x) if not Gamma[k, i, j].complex.same_as(C)
               else _exact_at(Gamma[k, i, j].ac[cid], x) for k, i, j in iproduct(range(N), repeat=3)}
        Hc = {ij: H[ij] for ij in iproduct(range(N), repeat=2)}
        Hx = {ij: _exact_at(_ac_piece_at(Hc[ij], x), x) for ij in Hc}
        fx = _exact_at(f.pieces[cid], x)
        grad = [_exact_at(f.pieces[cid].diff(i), x) for i in range(N)]
        for _ in range(n_dirs):
            for _attempt in range(50):
                u = rng.normal(size=N)
                u /= np.sqrt(u @ Gx @ u)
                w = [_to_fraction(c, 10**6) for c in u]
                corr = [sum(gam[k, i, j] * w[i] * w[j] for i, j in iproduct(range(N), repeat=2)) for k in range(N)]
                r = max(Fraction(r) for r in radii)
                if _in_domain(C, [x[k] + r * w[k] - r * r * corr[k] / 2 for k in range(N)]):
                    break
            else:
                raise SamplePointOnSkeleton(f"no direction from {tuple(map(float, x))} stays inside the domain")
            wgw = sum(float(w[i]) * Gx[i, j] * float(w[j]) for i in range(N) for j in range(N))
            lin = sum(g * wi for g, wi in zip(grad, w))
            quad = sum(Hx[i, j] * w[i] * w[j] for i, j in iproduct(range(N), repeat=2))
            ratios = []
            for r in radii:
                r = Fraction(r)
                y = tuple(x[k] + r * w[k] - r * r * corr[k] / 2 for k in range(N))
                y = tuple(c if isinstance(c, Fraction) else _to_fraction(float(c), 10**30) if not hasattr(c, "evalf")
                          else c for c in y)
                fy = _value_at(f, y)
                rem = fy - fx - r * lin - r * r * quad / 2
                ratios.append(abs(float(rem)) / (float(r) ** 2 * wgw))
            good = all(b == 0 or b <= a / 2 for a, b in zip(ratios, ratios[1:]))
            ok &= good
            rows.append({"point": [float(c) for c in x], "direction": [float(c) for c in w], "ratios": ratios, "pass": good})
    return {"rows": rows, "radii": [float(r) for r in radii], "pass": ok,
            "max_final_ratio": max(r["ratios"][-1] for r in rows) if rows else 0.0}


def _ac_piece_at(m, x):
    kind, cid = m.complex.locate(x)
    return m.ac[cid]


def _value_at(f, y):
    """Value of ``f`` at ``y`` whose coordinates may be sympy numbers."""
    if all(isinstance(c, Fraction) for c in y):
        kind, cid = f.complex.locate(y)
        if kind != "cell":
            return f.precise_value(y)
        return _exact_at(f.pieces[cid], y)
    yf = tuple(_to_fraction(float(c), 10**30) for c in y)
    kind, cid = f.complex.locate(yf)
    piece = f.pieces[cid if kind == "cell" else f.complex.facets[cid].minus]
    if piece.kind == EXACT:
        expr = piece.to_expr()
    elif piece.kind == SYMBOLIC:
        expr = piece.value
    else:
        return piece([float(c) for c in y])
    sub = {s: c for s, c in zip(symbols(f.N), y)}
    return expr.subs(sub).evalf(60)
