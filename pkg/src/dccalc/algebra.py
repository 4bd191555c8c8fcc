"""Scalar densities in ``n`` real variables.

Every piece of a piecewise function and every density of a measure is an
:class:`Fn`.  Three kinds are supported:

``exact``
    rational function with rational coefficients (sparse sympy field
    element); all arithmetic, differentiation and zero tests are exact.
``symbolic``
    sympy expression (used when square roots leave the rational class);
    evaluated numerically.
``numeric``
    vectorized callable on point arrays; only evaluation is available
    (plus derivatives when they were supplied).

Mixing kinds degrades towards ``numeric``.
"""

from fractions import Fraction
from functools import lru_cache
from math import isqrt

import numpy as np
import sympy
from sympy import QQ
from sympy.polys.fields import field

EXACT, SYMBOLIC, NUMERIC = "exact", "symbolic", "numeric"
_RANK = {EXACT: 0, SYMBOLIC: 1, NUMERIC: 2}


@lru_cache(maxsize=None)
def rational_field(n):
    """Return ``(K, gens)`` for the field QQ(x1, ..., xn)."""
    names = ",".join(f"x{i + 1}" for i in range(n))
    res = field(names, QQ)
    return res[0], tuple(res[1:])


def _poly_op(a, b, op):
    """Ring operation on two polynomial field elements without the generic gcd cancellation."""
    pa = a.numer.quo_ground(a.denom.LC)
    pb = b.numer.quo_ground(b.denom.LC)
    c, P = op(pa, pb).clear_denoms()
    return a.field.raw_new(P, a.field.ring(c))


@lru_cache(maxsize=None)
def symbols(n):
    return tuple(sympy.Symbol(f"x{i + 1}", real=True) for i in range(n))


@lru_cache(maxsize=None)
def _plain_symbols(n):
    return tuple(sympy.Symbol(f"x{i + 1}") for i in range(n))


def to_fraction(c):
    """Convert an mpq/int/Fraction/sympy Rational to :class:`Fraction`."""
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, sympy.Rational):
        return Fraction(int(c.p), int(c.q))
    if hasattr(c, "numerator") and hasattr(c, "denominator"):
        return Fraction(int(c.numerator), int(c.denominator))
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"not a rational: {c!r}")


def _qq(c):
    c = to_fraction(c)
    return QQ(c.numerator, c.denominator)


def _rational_sqrt(c):
    c = to_fraction(c)
    if c < 0:
        return None
    a, b = c.numerator, c.denominator
    ra, rb = isqrt(a), isqrt(b)
    if ra * ra == a and rb * rb == b:
        return Fraction(ra, rb)
    return None


class Fn:
    """A scalar function of ``n`` variables (see module docstring)."""

    __slots__ = ("n", "kind", "value", "_cache", "_grad")

    def __init__(self, n, kind, value, grad=None):
        self.n = n
        self.kind = kind
        self.value = value
        self._cache = None
        self._grad = grad

    # ------------------------------------------------------------------
    # constructors
    @classmethod
    def const(cls, n, c):
        if isinstance(c, float):
            c = float(c)
            return cls(n, NUMERIC, lambda pts, c=c: np.full(len(pts), c))
        K, _ = rational_field(n)
        return cls(n, EXACT, K(_qq(c)))

    @classmethod
    def var(cls, n, i):
        _, gens = rational_field(n)
        return cls(n, EXACT, gens[i])

    @classmethod
    def numeric(cls, n, func, grad=None):
        """Wrap ``func(points[M, n]) -> values[M]``."""
        return cls(n, NUMERIC, func, grad=grad)

    @classmethod
    def from_expr(cls, n, expr):
        """Build from a sympy expression or string in ``x1..xn``."""
        if isinstance(expr, str):
            loc = {s.name: s for s in _plain_symbols(n)}
            loc.update({"x": loc["x1"]} if n >= 1 else {})
            if n >= 2:
                loc["y"] = loc["x2"]
            if n >= 3:
                loc["z"] = loc["x3"]
            expr = sympy.sympify(expr, locals=loc)
        # normalise to plain symbols for the field conversion
        expr = expr.xreplace(dict(zip(symbols(n), _plain_symbols(n))))
        K, _ = rational_field(n)
        if expr.free_symbols - set(_plain_symbols(n)):
            raise ValueError(f"unknown symbols in {expr}")
        try:
            if expr.is_rational_function(*_plain_symbols(n)) and not expr.has(sympy.Float):
                return cls(n, EXACT, K.from_expr(expr))
        except Exception:  # pragma: no cover - sympy conversion corner cases
            pass
        return cls(n, SYMBOLIC, expr.xreplace(dict(zip(_plain_symbols(n), symbols(n)))))

    @classmethod
    def from_terms(cls, n, numer, denom=None):
        """Build from coefficient tables ``[(coef, exps), ...]``."""
        K, gens = rational_field(n)

        def build(terms):
            acc = K(0)
            for coef, exps in terms:
                if len(exps) != n:
                    raise ValueError("exponent tuple has wrong length")
                m = K(_qq(coef))
                for g, e in zip(gens, exps):
                    if e:
                        m = m * g ** int(e)
                acc = acc + m
            return acc

        num = build(numer)
        den = build(denom) if denom is not None else K(1)
        if den == 0:
            raise ZeroDivisionError("zero denominator")
        return cls(n, EXACT, num / den)

    # ------------------------------------------------------------------
    # conversions
    def _as_kind(self, kind):
        if kind == self.kind:
            return self.value
        if kind == SYMBOLIC:
            if self.kind == EXACT:
                expr = self.value.as_expr()
                return expr.xreplace(dict(zip(_plain_symbols(self.n), symbols(self.n))))
        if kind == NUMERIC:
            return self._evaluator()
        raise TypeError(f"cannot convert {self.kind} to {kind}")

    def to_expr(self):
        return self._as_kind(SYMBOLIC)

    def _lift(self, other):
        if isinstance(other, Fn):
            if other.n != self.n:
                raise ValueError("dimension mismatch")
            return other
        return Fn.const(self.n, other)

    def _binary(self, other, op, ring_op=False):
        other = self._lift(other)
        kind = max(self.kind, other.kind, key=_RANK.get)
        a, b = self._as_kind(kind), other._as_kind(kind)
        if kind == NUMERIC:
            return Fn(self.n, NUMERIC, lambda pts, a=a, b=b: op(a(pts), b(pts)))
        if ring_op and kind == EXACT and a.denom.is_ground and b.denom.is_ground:
            return Fn(self.n, EXACT, _poly_op(a, b, op))
        return Fn(self.n, kind, op(a, b))

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b, True)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b, True)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b, True)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        if self.kind == NUMERIC:
            f = self.value
            return Fn(self.n, NUMERIC, lambda pts: -f(pts))
        return Fn(self.n, self.kind, -self.value)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("integer powers only")
        if self.kind == NUMERIC:
            f = self.value
            return Fn(self.n, NUMERIC, lambda pts: f(pts) ** k)
        return Fn(self.n, self.kind, self.value ** k)

    def __repr__(self):
        if self.kind == NUMERIC:
            return f"Fn<numeric,{self.n}>"
        return f"Fn<{self.kind}:{self.to_expr()}>"

    # ------------------------------------------------------------------
    # queries
    @property
    def is_exact(self):
        return self.kind == EXACT

    def is_zero(self):
        """Exact zero test; ``None`` when undecidable (numeric kind)."""
        if self.kind == EXACT:
            return self.value == 0
        if self.kind == SYMBOLIC:
            expr = self.value
            if expr == 0:
                return True
            simp = sympy.simplify(expr)
            if simp == 0:
                return True
            eq = simp.equals(0)
            return bool(eq) if eq is not None else False
        return None

    def is_polynomial(self):
        return self.kind == EXACT and self.value.denom.is_ground

    def is_constant(self):
        if self.kind == EXACT:
            return self.value.numer.is_ground and self.value.denom.is_ground
        if self.kind == SYMBOLIC:
            return not self.value.free_symbols
        return False

    def degree(self):
        """Total degree of the numerator (exact kind)."""
        p = self.value.numer
        if p == 0:
            return 0
        return max(sum(m) for m in p.monoms())

    def denominator_degree(self):
        p = self.value.denom
        return max(sum(m) for m in p.monoms())

    def poly_terms(self):
        """``[(exps, Fraction)]`` of a polynomial density."""
        if not self.is_polynomial():
            raise ValueError("not a polynomial")
        d = to_fraction(self.value.denom.LC)
        return [(tuple(m), to_fraction(c) / d) for m, c in self.value.numer.terms()]

    def numerator(self):
        K, _ = rational_field(self.n)
        return Fn(self.n, EXACT, K(self.value.numer))

    def denominator(self):
        K, _ = rational_field(self.n)
        return Fn(self.n, EXACT, K(self.value.denom))

    # ------------------------------------------------------------------
    # evaluation
    def _evaluator(self):
        if self._cache is not None:
            return self._cache
        n = self.n
        if self.kind == EXACT:
            num = _compile_poly(self.value.numer, n)
            den = _compile_poly(self.value.denom, n)
            if self.value.denom.is_ground:
                c = float(to_fraction(self.value.denom.LC))
                f = lambda pts: num(pts) / c
            else:
                f = lambda pts: num(pts) / den(pts)
        elif self.kind == SYMBOLIC:
            lam = sympy.lambdify(symbols(n), self.value, "numpy")

            def f(pts):
                out = lam(*[pts[:, i] for i in range(n)])
                return np.broadcast_to(np.asarray(out, dtype=float), (len(pts),)).copy()
        else:
            f = self.value
        self._cache = f
        return f

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts.reshape(1, -1)
        out = np.asarray(self._evaluator()(pts), dtype=float)
        return float(out[0]) if single else out

    def at(self, point):
        """Exact value (Fraction) at a rational point when exact, else float."""
        if self.kind == EXACT:
            args = [_qq(c) for c in point]
            num = self.value.numer(*args) if self.n > 1 else self.value.numer(args[0])
            den = self.value.denom(*args) if self.n > 1 else self.value.denom(args[0])
            num, den = to_fraction(num), to_fraction(den)
            if den == 0:
                raise ZeroDivisionError("denominator vanishes")
            return num / den
        return self([float(c) for c in point])

    # ------------------------------------------------------------------
    # calculus
    def diff(self, i):
        if self.kind == EXACT:
            _, gens = rational_field(self.n)
            return Fn(self.n, EXACT, self.value.diff(gens[i]))
        if self.kind == SYMBOLIC:
            return Fn(self.n, SYMBOLIC, sympy.diff(self.value, symbols(self.n)[i]))
        if self._grad is None:
            raise NotImplementedError("numeric density without supplied derivatives")
        return self._grad[i]

    def compose(self, subs):
        """Return ``self(subs[0], ..., subs[n-1])``; subs are :class:`Fn` in m variables."""
        if len(subs) != self.n:
            raise ValueError("need one substitution per variable")
        m = subs[0].n
        kind = max([self.kind] + [s.kind for s in subs], key=_RANK.get)
        if kind == NUMERIC:
            f = self._evaluator()
            gs = [s._evaluator() for s in subs]
            return Fn(m, NUMERIC, lambda pts: f(np.stack([g(pts) for g in gs], axis=-1)))
        if kind == SYMBOLIC:
            expr = self.to_expr()
            rep = {s: t.to_expr() for s, t in zip(symbols(self.n), subs)}
            return Fn(m, SYMBOLIC, expr.xreplace(rep))
        if m == self.n and all(s.is_polynomial() for s in subs):
            K, gens = rational_field(m)
            R = K.ring
            polys = [s.value.numer * R(1 / to_fraction(s.value.denom.LC)) for s in subs]
            pairs = list(zip(R.gens, polys))
            num = self.value.numer.compose(pairs)
            den = self.value.denom.compose(pairs)
            return Fn(m, EXACT, K(num) / K(den))
        return _generic_compose(self, subs)

    def sqrt(self, sample=None):
        """Square root.

        Exact when the radicand is a perfect square; the branch sign is
        fixed so that the result is positive at ``sample`` (a point where
        the radicand is known to be positive).
        """
        if self.kind == EXACT:
            root = _exact_sqrt(self)
            if root is not None:
                if sample is not None and root.at(sample) < 0:
                    root = -root
                return root
            return Fn(self.n, SYMBOLIC, sympy.sqrt(self.to_expr()))
        if self.kind == SYMBOLIC:
            return Fn(self.n, SYMBOLIC, sympy.sqrt(self.value))
        f = self.value
        return Fn(self.n, NUMERIC, lambda pts: np.sqrt(f(pts)))

    def abs_numeric(self):
        f = self._evaluator()
        return Fn(self.n, NUMERIC, lambda pts: np.abs(f(pts)))

    def embed(self, m):
        """View as a function of ``m >= n`` variables (extra ones ignored)."""
        if m == self.n:
            return self
        subs = [Fn.var(m, i) for i in range(self.n)]
        return self.compose(subs)


def _compile_poly(p, n):
    terms = p.terms()
    if not terms:
        return lambda pts: np.zeros(len(pts))
    exps = np.array([m for m, _ in terms], dtype=int).reshape(len(terms), n)
    coef = np.array([float(to_fraction(c)) for _, c in terms])
    maxe = exps.max(axis=0) if len(exps) else np.zeros(n, dtype=int)

    def f(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros((len(pts), len(terms)))
        out[:] = coef
        for i in range(n):
            if maxe[i] == 0:
                continue
            powers = pts[:, i:i + 1] ** np.arange(maxe[i] + 1)
            out *= powers[:, exps[:, i]]
        return out.sum(axis=1)

    return f


def _poly_eval_fn(p, subs, m):
    """Evaluate a polynomial at Fn arguments (exact arithmetic)."""
    K, _ = rational_field(m)
    acc = Fn(m, EXACT, K(0))
    cache = {}
    for mon, c in p.terms():
        term = Fn(m, EXACT, K(_qq(to_fraction(c))))
        for i, e in enumerate(mon):
            if e:
                key = (i, e)
                if key not in cache:
                    cache[key] = subs[i] ** int(e)
                term = term * cache[key]
        acc = acc + term
    return acc


def _generic_compose(f, subs):
    m = subs[0].n
    num = _poly_eval_fn(f.value.numer, subs, m)
    den = _poly_eval_fn(f.value.denom, subs, m)
    return num / den


def _exact_sqrt(f):
    K, _ = rational_field(f.n)
    parts = []
    for p in (f.value.numer, f.value.denom):
        if p.is_ground:
            r = _rational_sqrt(to_fraction(p.LC))
            if r is None:
                return None
            parts.append(K(_qq(r)))
            continue
        c, facs = p.factor_list()
        if any(mult % 2 for _, mult in facs):
            return None
        c = to_fraction(c)
        sign = 1
        if c < 0:
            # the radicand may still be positive on the cell; defer sign to evaluation
            c, sign = -c, -1
        r = _rational_sqrt(c)
        if r is None:
            return None
        acc = K(_qq(r))
        for g, mult in facs:
            acc = acc * K(g) ** (mult // 2)
        parts.append((acc, sign))
    num, den = parts
    sgn = 1
    if isinstance(num, tuple):
        num, s = num
        sgn *= s
    if isinstance(den, tuple):
        den, s = den
        sgn *= s
    if sgn < 0:
        # radicand = -(square)/(square) cannot be positive anywhere
        return None
    return Fn(f.n, EXACT, num / den)


def fn_equal(a, b):
    """Exact equality for exact/symbolic densities; ``None`` if numeric."""
    return (a - b).is_zero()
