"""Covariant tensors and vector fields: pull-back, evaluation, norms."""

from itertools import product as iproduct

import numpy as np

from .algebra import Fn
from .cellgeom import QuadratureRule, box_halfspaces
from .errors import IllegalPairing
from .measurefield import MeasureField, multiply, total_variation
from .metric import MetricField, frames_from_matrices
from .pwalg import PiecewiseScalar


class CovariantTensor:
    """Covariant ``p``-tensor with components indexed by ``p``-tuples.

    ``sector`` is ``"BV"`` for PiecewiseScalar components and ``"GM"`` for
    MeasureField components.
    """

    def __init__(self, order, components, sector, N):
        if sector not in ("BV", "GM"):
            raise ValueError("sector must be 'BV' or 'GM'")
        self.order = order
        self.components = dict(components)
        self.sector = sector
        self.N = N
        kind = PiecewiseScalar if sector == "BV" else MeasureField
        for k, v in self.components.items():
            if not isinstance(v, kind):
                raise TypeError(f"component {k} does not match sector {sector}")

    def __getitem__(self, idx):
        if isinstance(idx, int):
            idx = (idx,)
        return self.components[tuple(idx)]

    @property
    def complex(self):
        return next(iter(self.components.values())).complex

    @classmethod
    def from_functions(cls, array):
        """Build a BV-sector tensor from a nested list of PiecewiseScalar."""
        comps = {}
        N = None

        def walk(a, idx):
            nonlocal N
            if isinstance(a, PiecewiseScalar):
                comps[idx] = a
                N = a.N
            else:
                for i, sub in enumerate(a):
                    walk(sub, idx + (i,))

        walk(array, ())
        order = len(next(iter(comps)))
        return cls(order, comps, "BV", N)

    @classmethod
    def from_measures(cls, array):
        comps = {}

        def walk(a, idx):
            if isinstance(a, MeasureField):
                comps[idx] = a
            else:
                for i, sub in enumerate(a):
                    walk(sub, idx + (i,))

        walk(array, ())
        first = next(iter(comps.values()))
        return cls(len(next(iter(comps))), comps, "GM", first.N)

    def as_measures(self):
        """GM-sector view (function components times Lebesgue measure)."""
        if self.sector == "GM":
            return self
        comps = {k: MeasureField(v.complex, v.pieces) for k, v in self.components.items()}
        return CovariantTensor(self.order, comps, "GM", self.N)


def differential(f):
    """``df`` as a BV-sector 1-tensor with components ``d_i f``."""
    return CovariantTensor(1, {(i,): f.partial(i) for i in range(f.N)}, "BV", f.N)


class VectorField:
    """Contravariant field with PiecewiseScalar (or MeasureField) components."""

    def __init__(self, components):
        self.components = list(components)
        self.N = len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    @property
    def complex(self):
        return self.components[0].complex

    @property
    def is_measure(self):
        return isinstance(self.components[0], MeasureField)

    @property
    def jump_facets(self):
        out = set()
        for c in self.components:
            out |= c.jump_facets
        return frozenset(out)

    @classmethod
    def constant(cls, complex, values):
        return cls([PiecewiseScalar.constant(complex, v) for v in values])


# ---------------------------------------------------------------------------
# pull-backs


def _jacobian_product(F, idx_src, idx_tgt):
    out = None
    for i, j in zip(idx_src, idx_tgt):
        term = F.jacobian[j][i]
        out = term if out is None else out * term
    return out


def pullback_tensor(F, S):
    """``(F*S)_{i..} = sum_j prod_k d_{i_k} F_{j_k} F*(S_{j..})``."""
    N, p = S.N, S.order
    if p == 0:
        v = S[()]
        pulled = F.pullback_function(v) if S.sector == "BV" else F.pullback_measure(v)
        return CovariantTensor(0, {(): pulled}, S.sector, N)
    pulled = {}
    for j, comp in S.components.items():
        pulled[j] = F.pullback_function(comp) if S.sector == "BV" else F.pullback_measure(comp)
    comps = {}
    for i in iproduct(range(N), repeat=p):
        acc = None
        for j in iproduct(range(N), repeat=p):
            w = _jacobian_product(F, i, j)
            if S.sector == "BV":
                term = w * pulled[j]
            else:
                term = multiply(w, pulled[j])
            acc = term if acc is None else acc + term
        comps[i] = acc
    return CovariantTensor(p, comps, S.sector, N)


def pullback_metric(F, G):
    """Metric ``dF^T (G o F) dF`` on F's source."""
    S = CovariantTensor.from_functions([[G.g[i][j] for j in range(G.N)] for i in range(G.N)])
    P = pullback_tensor(F, S)
    return MetricField([[P[(i, j)] for j in range(G.N)] for i in range(G.N)], F.source)


def pullback_vector(F, X):
    """``X_alpha = dF^{-1} (X_beta o F)``."""
    N = X.N
    pulled = [F.pullback_function(c) for c in X.components]
    inv = F.jacobian_inverse
    comps = []
    for i in range(N):
        acc = None
        for j in range(N):
            term = inv[i][j] * pulled[j]
            acc = term if acc is None else acc + term
        comps.append(acc)
    return VectorField(comps)


# ---------------------------------------------------------------------------
# evaluation and norms


def evaluate(S, *Xs, precise=False):
    """``S(X_1, ..., X_p) = sum_j X_1^{j_1} ... X_p^{j_p} S_j`` as a measure.

    Each vector factor enters through its precise representative on facets.
    With ``precise=False`` a jump-bearing factor meeting a jump of the
    measure raises :class:`IllegalPairing`.
    """
    if len(Xs) != S.order:
        raise ValueError("need one vector field per tensor slot")
    T = S.as_measures()
    total = None
    for j, comp in T.components.items():
        m = comp
        for X, jk in zip(reversed(Xs), reversed(j)):
            m = multiply(X[jk], m, precise=precise)
        total = m if total is None else total + m
    return total


def _frame_stack(G, cid, P, facet=None):
    M = G.facet_matrices(facet, P) if facet is not None else G.matrices(cid, P)
    return frames_from_matrices(M)


def _norm_density(S_vals, E):
    """Euclidean norm of ``S(E_{i1}, ..., E_{ip})`` given component values.

    ``S_vals`` maps index tuples to arrays of shape (M,), ``E`` has shape
    (M, N, N) with frame vectors as rows.
    """
    p = len(next(iter(S_vals)))
    N = E.shape[1]
    M = E.shape[0]
    T = np.zeros((M,) + (N,) * p)
    for j, v in S_vals.items():
        T[(slice(None),) + j] = v
    # contract every slot with the frame
    for slot in range(p):
        T = np.moveaxis(np.einsum("mij,m...j->m...i", E, np.moveaxis(T, slot + 1, -1)), -1, slot + 1)
    return np.sqrt(np.sum(T.reshape(M, -1) ** 2, axis=1))


def _rotate(E, rotation, P):
    if rotation is None:
        return E
    Q = rotation(P) if callable(rotation) else np.broadcast_to(np.asarray(rotation, dtype=float), E.shape)
    return np.einsum("mik,mkj->mij", Q, E)


def tensor_norm(S, G, rotation=None):
    """``|S|_g`` as a nonnegative measure (numeric nodal densities).

    ``rotation`` (orthogonal matrix or callable ``P -> (M, N, N)``) replaces
    the Gram-Schmidt frame ``E`` by ``Q E``, another orthonormal frame.
    """
    T = S.as_measures()
    C = T.complex
    if not G.complex.same_as(C):
        G = G.on(C)
    N = S.N
    ac = []
    for cell in C.cells:
        dens = {j: comp.ac[cell.id] for j, comp in T.components.items()}

        def f(P, dens=dens, cid=cell.id):
            E = _rotate(_frame_stack(G, cid, P), rotation, P)
            return _norm_density({j: d(P) for j, d in dens.items()}, E)

        ac.append(Fn.numeric(N, f))
    jump = {}
    fids = set().union(*[set(c.jump) for c in T.components.values()])
    for fid in fids:
        dens = {j: comp.jump_density(fid) for j, comp in T.components.items()}

        def f(P, dens=dens, fid=fid):
            E = _rotate(_frame_stack(G, None, P, facet=fid), rotation, P)
            return _norm_density({j: d(P) for j, d in dens.items()}, E)

        jump[fid] = Fn.numeric(N, f)
    return MeasureField(C, ac, jump)


def vector_norm(X, G):
    """``|X|_g``: a PiecewiseScalar (numeric pieces) for function fields,
    the total variation measure for measure-valued fields."""
    C = X.complex
    if not G.complex.same_as(C):
        G = G.on(C)
    N = X.N
    if X.is_measure:
        # lower the index with g and take the covector norm in the frame
        lowered = {}
        for i in range(N):
            acc = None
            for j in range(N):
                t = multiply(G.g[i][j], X[j])
                acc = t if acc is None else acc + t
            lowered[(i,)] = acc
        return tensor_norm(CovariantTensor(1, lowered, "GM", N), G)
    pieces = []
    for cell in C.cells:
        def f(P, cid=cell.id):
            M = G.matrices(cid, P)
            V = np.stack([X[i].pieces[cid](P) for i in range(N)], axis=1)
            return np.sqrt(np.einsum("mi,mij,mj->m", V, M, V))

        pieces.append(Fn.numeric(N, f))
    return PiecewiseScalar(C, pieces, check=False)


def _precise_vector_norm_on_facet(X, G, fid):
    N = X.N

    def f(P):
        M = G.facet_matrices(fid, P)
        V = np.stack([X[i].precise_trace(fid)(P) for i in range(N)], axis=1)
        return np.sqrt(np.einsum("mi,mij,mj->m", V, M, V))

    return Fn.numeric(N, f)


def abs_measure(mu):
    """Total variation of a scalar measure (numeric densities)."""
    return MeasureField(mu.complex, [a.abs_numeric() for a in mu.ac], {k: v.abs_numeric() for k, v in mu.jump.items()})


def cauchy_schwarz_check(S, Xs, G, boxes, rule=None, precise=False):
    """Verify ``|S(X..)|(A) <= int_A prod |X_k|_g d|S|_g`` on boxes.

    Returns per-box ``(lhs, rhs)`` and the worst ratio ``lhs / rhs``.
    """
    rule = rule or QuadratureRule.of_order(14)
    ev = evaluate(S, *Xs, precise=precise)
    lhs_m = abs_measure(ev)
    nrm = tensor_norm(S, G)
    C = nrm.complex
    if not G.complex.same_as(C):
        G = G.on(C)
    Xs_c = [VectorField([c.on(C) for c in X.components]) for X in Xs]
    norms = [vector_norm(X, G) for X in Xs_c]
    ac = []
    for cell in C.cells:
        a = nrm.ac[cell.id]
        for n_ in norms:
            a = a * n_.pieces[cell.id]
        ac.append(a)
    jump = {}
    for fid, d in nrm.jump.items():
        for X in Xs_c:
            d = d * _precise_vector_norm_on_facet(X, G, fid)
        jump[fid] = d
    rhs_m = MeasureField(C, ac, jump)
    rows = []
    for lo, hi in boxes:
        hs = box_halfspaces(lo, hi)
        l = float(lhs_m.mass_in(hs, rule))
        r = float(rhs_m.mass_in(hs, rule))
        rows.append((l, r))
    holds = all(l <= r * (1 + 1e-10) + 1e-13 for l, r in rows)
    ratios = [l / r for l, r in rows if r > 1e-14]
    return {"rows": rows, "holds": holds, "max_ratio": max(ratios) if ratios else 0.0,
            "min_ratio": min(ratios) if ratios else 0.0}
