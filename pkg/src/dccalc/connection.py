"""Christoffel measures and covariant derivatives."""

from fractions import Fraction
from itertools import product as iproduct

from .measurefield import MeasureField, derivative, measure_residual, multiply


class ChristoffelField:
    """``Gamma^k_ij`` stored as an ``N x N x N`` nest of :class:`MeasureField`."""

    def __init__(self, gamma, complex):
        self.gamma = gamma
        self.complex = complex
        self.N = len(gamma)

    def __getitem__(self, kij):
        k, i, j = kij
        return self.gamma[k][i][j]

    def symmetry_residual(self):
        worst = 0
        for k, i, j in iproduct(range(self.N), repeat=3):
            if i < j:
                worst = max(worst, measure_residual(self.gamma[k][i][j], self.gamma[k][j][i]))
        return worst

    def is_GM0(self):
        return all(self.gamma[k][i][j].is_GM0 for k, i, j in iproduct(range(self.N), repeat=3))


def christoffel(G):
    """Christoffel measures of a metric field.

    ``Gamma^k_ij = 1/2 sum_l g^{kl} (D_j g_li + D_i g_lj - D_l g_ij)``
    with products taken through :func:`multiply` (``g^{kl}`` is continuous).
    """
    N = G.N
    inv = G.inverse()
    Dg = {}
    for a, b, c in iproduct(range(N), repeat=3):
        Dg[a, b, c] = derivative(G.g[a][b], c)  # D_c g_ab
    gamma = [[[None] * N for _ in range(N)] for _ in range(N)]
    half = Fraction(1, 2)
    for k, i, j in iproduct(range(N), repeat=3):
        acc = MeasureField.zero(G.complex)
        for l in range(N):
            inner = Dg[l, i, j] + Dg[l, j, i] - Dg[i, j, l]
            acc = acc + multiply(inv[k][l], inner)
        gamma[k][i][j] = acc.scale(half)
    return ChristoffelField(gamma, G.complex)


def covariant_derivative_tensor(S, Gamma):
    """``(DS)_{i0 i1..ip} = D_{i0} S_{i1..ip} - sum_j sum_m S_{..m..} Gamma^m_{i0 ij}``."""
    from .tensorcalc import CovariantTensor

    if S.sector != "BV":
        raise ValueError("covariant derivative needs function-valued components")
    N, p = S.N, S.order
    comps = {}
    for idx in iproduct(range(N), repeat=p + 1):
        i0, rest = idx[0], idx[1:]
        acc = derivative(S[rest], i0)
        for j in range(p):
            for m in range(N):
                swapped = rest[:j] + (m,) + rest[j + 1:]
                acc = acc - multiply(S[swapped], Gamma[m, i0, rest[j]], precise=True)
        comps[idx] = acc
    return CovariantTensor(p + 1, comps, "GM", N)


def covariant_derivative_vector(Y, Gamma):
    """``(DY)_j^s = D_j Y^s + sum_v Y^v Gamma^s_{jv}``; returns ``out[j][s]``."""
    N = Y.N
    out = [[None] * N for _ in range(N)]
    for j in range(N):
        for s in range(N):
            acc = derivative(Y[s], j)
            for v in range(N):
                acc = acc + multiply(Y[v], Gamma[s, j, v], precise=True)
            out[j][s] = acc
    return out


def metric_compatibility_residual(G, Gamma):
    """Residual of ``D g = 0`` with ``g`` viewed as a covariant 2-tensor."""
    from .tensorcalc import CovariantTensor

    S = CovariantTensor.from_functions([[G.g[i][j] for j in range(G.N)] for i in range(G.N)])
    DS = covariant_derivative_tensor(S, Gamma)
    zero = MeasureField.zero(G.complex)
    return max(measure_residual(c, zero) for c in DS.components.values())


def christoffel_transform_check(F, G_target, Gamma_target=None):
    """Both sides of the Christoffel transformation law on F's source.

    Left: Christoffel measures of the pulled-back metric.  Right:
    ``sum_t (dF^-1)_{kt} (sum_{m,s} d_aF_m d_bF_s F*(Gt^t_ms) + D_a d_b F_t)``.
    """
    from .tensorcalc import pullback_metric

    N = F.N
    Gs = pullback_metric(F, G_target)
    lhs = christoffel(Gs)
    Gt = Gamma_target or christoffel(G_target)
    pulled = {(t, m, s): F.pullback_measure(Gt[t, m, s]) for t, m, s in iproduct(range(N), repeat=3)}
    dF = F.jacobian
    dFinv = F.jacobian_inverse
    worst = 0
    rhs_all = {}
    for k, a, b in iproduct(range(N), repeat=3):
        rhs = MeasureField.zero(F.source)
        for t in range(N):
            inner = derivative(dF[t][b], a)
            for m, s in iproduct(range(N), repeat=2):
                inner = inner + multiply(dF[m][a] * dF[s][b], pulled[t, m, s])
            rhs = rhs + multiply(dFinv[k][t], inner)
        rhs_all[k, a, b] = rhs
        worst = max(worst, measure_residual(lhs[k, a, b], rhs))
    return {"residual": worst, "lhs": lhs, "rhs": rhs_all, "tier": F.tier}
