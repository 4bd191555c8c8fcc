"""Continuous piecewise-rational Riemannian metrics in a chart."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import Fn
from .cellgeom import QuadratureRule, common_refinement
from .errors import DiscontinuousMetric, EllipticityViolated
from .measurefield import MeasureField, derivative, multiply, measure_residual
from .pwalg import PiecewiseScalar


@dataclass(frozen=True)
class EllipticityCertificate:
    """Sampled two-sided bound ``c |p|^2 <= g(p, p) <= |p|^2 / c``."""

    sampled_min_eig: float
    sampled_max_eig: float
    c: float  # sampled constant
    certified_c: float  # margin * c, the value recorded as certified
    margin: float
    n_samples: int
    declared: object = None


def det_matrix(M):
    """Determinant of a small matrix of ring elements (cofactor expansion)."""
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    total = None
    for j in range(n):
        minor = [[M[r][c] for c in range(n) if c != j] for r in range(1, n)]
        term = M[0][j] * det_matrix(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total


def adjugate(M):
    n = len(M)
    if n == 1:
        return [[M[0][0] * 0 + 1]]
    adj = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != i] for r in range(n) if r != j]
            val = det_matrix(minor)
            adj[i][j] = val if (i + j) % 2 == 0 else -val
    return adj


class MetricField:
    """Symmetric, continuous, elliptic metric ``g_ij`` on a cell complex.

    Parameters
    ----------
    components : N x N nested list
        PiecewiseScalar, Fn, numbers or expression strings.
    complex : CellComplex, optional
        Required when no component is a PiecewiseScalar.
    declared_c : float, optional
        Ellipticity constant to verify against the sampled bounds.
    margin : float
        Safety factor applied to the sampled constant.
    """

    def __init__(self, components, complex=None, declared_c=None, margin=0.9, seed=0, samples_order=6):
        N = len(components)
        if any(len(row) != N for row in components):
            raise ValueError("metric must be square")
        comps = [list(row) for row in components]
        C = complex
        for row in comps:
            for c in row:
                if isinstance(c, PiecewiseScalar):
                    C = c.complex if C is None else (C if C.same_as(c.complex) else common_refinement(C, c.complex)[0])
        if C is None:
            raise ValueError("a complex is required")
        self.complex = C
        self.N = N
        self.g = [[_as_ps(comps[i][j], C) for j in range(N)] for i in range(N)]
        for i in range(N):
            for j in range(i + 1, N):
                if not self.g[i][j].equals(self.g[j][i]):
                    raise ValueError(f"metric is not symmetric at component [{i}][{j}]")
        for i in range(N):
            for j in range(N):
                if not self.g[i][j].flags.is_continuous:
                    raise DiscontinuousMetric(f"component g[{i}][{j}] jumps across facets")
        self.certificate = self._certify(declared_c, margin, seed, samples_order)

    # -- ellipticity ------------------------------------------------------------
    def sample_points(self, order=6):
        rule = QuadratureRule.of_order(order)
        out = []
        for cell in self.complex.cells:
            P, _ = self.complex.cell_nodes(cell.id, rule)
            V = np.array([[float(c) for c in p] for p in cell.points])
            out.append((cell.id, np.vstack([P, V])))
        for f in self.complex.facets:
            P, _ = self.complex.facet_nodes(f.id, rule)
            out.append((f.minus, P))
        return out

    def _certify(self, declared, margin, seed, order):
        lo, hi, n = np.inf, -np.inf, 0
        for cid, P in self.sample_points(order):
            M = self.matrices(cid, P)
            eig = np.linalg.eigvalsh(M)
            lo = min(lo, eig.min())
            hi = max(hi, eig.max())
            n += len(P)
        if not lo > 0:
            raise EllipticityViolated(f"metric not positive definite at a sample point (min eigenvalue {lo:g})")
        c = min(lo, 1.0 / hi)
        if declared is not None:
            d = float(declared)
            if not (lo >= d and hi <= 1.0 / d):
                raise EllipticityViolated(
                    f"declared constant {d} violated: sampled eigenvalues in [{lo:g}, {hi:g}]"
                )
        return EllipticityCertificate(float(lo), float(hi), float(c), float(margin * c), margin, n, declared)

    # -- evaluation ---------------------------------------------------------------
    def matrices(self, cid, P):
        """Metric matrices ``(M, N, N)`` of the piece on cell ``cid`` at points ``P``."""
        P = np.atleast_2d(P)
        out = np.empty((len(P), self.N, self.N))
        for i in range(self.N):
            for j in range(self.N):
                out[:, i, j] = self.g[i][j].pieces[cid](P)
        return out

    def facet_matrices(self, fid, P):
        """Precise (averaged) metric matrices on facet ``fid``."""
        f = self.complex.facets[fid]
        out = np.empty((len(P), self.N, self.N))
        for i in range(self.N):
            for j in range(self.N):
                out[:, i, j] = self.g[i][j].precise_trace(fid)(P)
        return out

    def at(self, point):
        """Precise value of the metric matrix at a point (numeric)."""
        return np.array([[float(self.g[i][j].precise_value(point)) for j in range(self.N)] for i in range(self.N)])

    # -- algebra ------------------------------------------------------------------
    def det(self):
        return det_matrix(self.g)

    def sqrt_det(self):
        return self.det().sqrt()

    def inverse(self):
        """Inverse metric ``g^{ij}`` as continuous PiecewiseScalar components."""
        if getattr(self, "_inv", None) is None:
            det = self.det()
            adj = adjugate(self.g)
            self._inv = [[adj[i][j] / det for j in range(self.N)] for i in range(self.N)]
        return self._inv

    def on(self, complex):
        return MetricField([[self.g[i][j].on(complex) for j in range(self.N)] for i in range(self.N)], complex)


def _as_ps(c, C):
    if isinstance(c, PiecewiseScalar):
        return c.on(C) if not c.complex.same_as(C) else PiecewiseScalar(C, c.pieces, check=False)
    fn = c if isinstance(c, Fn) else (Fn.from_expr(C.N, c) if isinstance(c, str) else Fn.const(C.N, c))
    return PiecewiseScalar(C, [fn] * len(C.cells))


def identity_metric(complex):
    N = complex.N
    return MetricField([[int(i == j) for j in range(N)] for i in range(N)], complex)


def inverse_metric(G):
    return G.inverse()


def boundary_bubble(complex):
    """Polynomial vanishing on every boundary facet hyperplane, positive inside convex domains."""
    seen = {}
    for f in complex.boundary_facets:
        key = (f.normal, f.offset)
        seen[key] = None
    out = Fn.const(complex.N, 1)
    for n, off in seen:
        lin = Fn.const(complex.N, off)
        for i, c in enumerate(n):
            if c != 0:
                lin = lin - Fn.var(complex.N, i) * c
        out = out * lin
    return out


def test_panel(complex, degree=6, bubble=True):
    """Polynomial test functions: bubble times centred monomials up to ``degree``."""
    from .measurefield import _monomials

    N = complex.N
    ctr = [sum(v[i] for v in complex.vertices) / len(complex.vertices) for i in range(N)]
    b = boundary_bubble(complex) if bubble else Fn.const(N, 1)
    out = []
    for exps in _monomials(N, degree):
        m = Fn.const(N, 1)
        for i, e in enumerate(exps):
            if e:
                m = m * (Fn.var(N, i) - ctr[i]) ** e
        out.append(b * m)
    return out


def sqrt_det_derivative_check(G, i, degree=4, rule=None):
    """Compare the weak derivative of ``sqrt(det G)`` with ``(sqrt det G / 2) g^{ks} d_i g_ks``.

    The left side is computed numerically as ``-int sqrt(det G) d_i phi``
    over a bubble-weighted polynomial panel.
    """
    rule = rule or QuadratureRule.of_order(24)
    C = G.complex
    sq = G.sqrt_det()
    inv = G.inverse()
    rhs = MeasureField.zero(C)
    for k in range(G.N):
        for s in range(G.N):
            rhs = rhs + multiply(sq * inv[k][s] * Fraction(1, 2), derivative(G.g[k][s], i))
    worst, scale = 0.0, 1.0
    for phi in test_panel(C, degree):
        lhs = 0.0
        dphi = phi.diff(i)
        for cell in C.cells:
            P, W = C.cell_nodes(cell.id, rule)
            lhs -= float(np.dot(W, sq.pieces[cell.id](P) * dphi(P)))
        r = float(rhs.pair(phi, rule))
        worst = max(worst, abs(lhs - r))
        scale = max(scale, abs(lhs), abs(r))
    return {"residual": worst / scale, "rhs": rhs}


def orthonormal_frame(G, point=None, matrix=None):
    """Gram-Schmidt frame of the coordinate basis: rows ``E`` with ``E G E^T = I``."""
    M = G.at(point) if matrix is None else np.asarray(matrix, dtype=float)
    return frame_from_matrix(M)


def frame_from_matrix(M):
    M = np.asarray(M, dtype=float)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise EllipticityViolated("metric is not positive definite at the point") from exc
    return np.linalg.inv(L)


def frames_from_matrices(Ms):
    """Vectorised :func:`frame_from_matrix` over a stack ``(M, N, N)``."""
    try:
        L = np.linalg.cholesky(Ms)
    except np.linalg.LinAlgError as exc:
        raise EllipticityViolated("metric is not positive definite at a sample point") from exc
    return np.linalg.inv(L)
