"""Flat cone of total angle ``theta``: distance from a point, its cut locus and Laplacian.

Points are given in geodesic polar coordinates ``(rho, phi)`` with
``phi`` in ``[0, theta)``; the cone metric is ``d rho^2 + rho^2 d phi^2``.
The basepoint is ``p = (a, 0)``.  Charts use ``(rho, s)`` with
``phi = theta s``, so the chart metric is ``diag(1, theta^2 rho^2)``.
"""

from fractions import Fraction

import numpy as np
import sympy
from numpy.polynomial import legendre

from .algebra import Fn
from .atlas import AtlasScene, Chart, Overlap, global_measure
from .cellgeom import box_complex
from .errors import AnnulusTouchesApex, ApexQuery
from .measurefield import MeasureField
from .metric import MetricField

PUNCTURE = 1e-3


def parse_angle(text):
    """``"3pi/2"``, ``"1.5*pi"`` or ``"4.71"`` -> sympy expression."""
    if isinstance(text, (int, float)):
        return sympy.Float(text)
    if isinstance(text, sympy.Basic):
        return text
    s = str(text).strip().replace("π", "pi")
    for k in "0123456789)":
        s = s.replace(f"{k}pi", f"{k}*pi")
    return sympy.sympify(s)


class ConeScene:
    """Distance function on a flat cone and its Laplacian near the cut locus.

    Parameters
    ----------
    angle : str, float or sympy expression
        Total angle ``theta`` in ``(0, 2 pi]``.
    base_radius : float
        Radius ``a`` of the basepoint.
    annulus : (float, float), optional
        Radii ``[rho0, rho1]`` of the working annulus; defaults to ``[3a, 5a]``.
    """

    def __init__(self, angle="3*pi/2", base_radius=1.0, annulus=None):
        self.theta_expr = parse_angle(angle)
        self.theta = float(self.theta_expr)
        if not 0 < self.theta <= 2 * np.pi + 1e-15:
            raise ValueError("total angle must lie in (0, 2 pi]")
        self.a = float(base_radius)
        if self.a <= 0:
            raise ValueError("base radius must be positive")
        lo, hi = annulus if annulus is not None else (3 * self.a, 5 * self.a)
        self.annulus = (float(lo), float(hi))
        self.puncture = PUNCTURE * self.a
        if self.annulus[0] <= self.puncture:
            raise AnnulusTouchesApex(f"annulus inner radius {lo} reaches the apex puncture {self.puncture:g}")
        if not self.annulus[0] < self.annulus[1]:
            raise ValueError("annulus radii must increase")
        if self.annulus[0] <= self.a <= self.annulus[1]:
            raise ValueError("annulus must avoid the basepoint radius")
        self.cut_angle = self.theta / 2

    # -- distance -----------------------------------------------------------------
    def _angle_gap(self, phi):
        phi = np.mod(phi, self.theta)
        return np.minimum(phi, self.theta - phi)

    def distance(self, q):
        """Geodesic distance from ``p`` to ``q = (rho, phi)``."""
        rho, phi = float(q[0]), float(q[1])
        if rho == 0:
            raise ApexQuery("distance queried at the apex")
        return float(self.distance_array(np.array([rho]), np.array([phi]))[0])

    def distance_array(self, rho, phi):
        gap = self._angle_gap(phi)
        d2 = self.a ** 2 + rho ** 2 - 2 * self.a * rho * np.cos(gap)
        straight = np.sqrt(np.maximum(d2, 0.0))
        return np.where(gap >= np.pi, self.a + rho, straight)

    def distance_gradients(self, q):
        """Both unit gradients at a cut-locus point, in the orthonormal (radial, angular) frame.

        Returns ``(grad_minus, grad_plus)`` from the sides ``phi < theta/2``
        and ``phi > theta/2``.
        """
        rho = float(q[0])
        if rho == 0:
            raise ApexQuery("gradient queried at the apex")
        phi = float(q[1]) if len(q) > 1 else self.cut_angle
        if abs(np.mod(phi, self.theta) - self.cut_angle) > 1e-12:
            raise ValueError("point is not on the cut locus")
        return self._side_gradient(rho, phi, -1), self._side_gradient(rho, phi, +1)

    def _side_gradient(self, rho, phi, side):
        # image of p at angle 0 (minus side) or theta (plus side)
        gap = phi if side < 0 else self.theta - phi
        d = np.sqrt(self.a ** 2 + rho ** 2 - 2 * self.a * rho * np.cos(gap))
        radial = (rho - self.a * np.cos(gap)) / d
        angular = self.a * np.sin(gap) / d
        return np.array([radial, angular if side < 0 else -angular])

    def cut_normal(self):
        """Unit normal of the cut ray pointing towards increasing ``phi``."""
        return np.array([0.0, 1.0])

    def explicit_jump_density(self, rho):
        """``g(grad+ - grad-, nu)`` along the cut from the two competing gradients."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        nu = self.cut_normal()
        out = np.empty_like(rho)
        for k, r in enumerate(rho):
            gm, gp = self.distance_gradients((r, self.cut_angle))
            out[k] = (gp - gm) @ nu
        return out

    def gradient_jump_tangential(self, rho):
        """Tangential part of the gradient jump (must vanish: d_p is continuous)."""
        out = []
        for r in np.atleast_1d(rho):
            gm, gp = self.distance_gradients((r, self.cut_angle))
            out.append((gp - gm)[0])
        return np.array(out)

    def ac_density(self, rho, phi):
        """Absolutely continuous Laplacian density off the cut and the basepoint."""
        return 1.0 / self.distance_array(rho, phi)

    # -- charts ---------------------------------------------------------------
    def chart_metric_expr(self):
        return sympy.sympify("x1") ** 2 * self.theta_expr ** 2

    def _chart_complex(self, s_breaks):
        lo, hi = (Fraction(x).limit_denominator(10**9) for x in self.annulus)
        return box_complex([[lo, hi], [Fraction(s) for s in s_breaks]])

    def atlas(self):
        """Two angular charts glued by rotations ``s_B = s_A`` and ``s_B = s_A + 1``."""
        if getattr(self, "_atlas", None) is None:
            q = Fraction(1, 8)
            A = self._chart_complex([q, 2 * q, 3 * q, 4 * q, 7 * q])
            B = self._chart_complex([3 * q, 4 * q, 7 * q, 9 * q, 10 * q])
            metric = [[1, 0], [0, Fn.from_expr(2, self.chart_metric_expr())]]
            ca = Chart("A", A, MetricField(metric, A), gluing_axis=1)
            cb = Chart("B", B, MetricField(metric, B), gluing_axis=1)
            charts = [ca, cb]
            ov1 = Overlap.build(charts, 0, 1, _cells_in(A, 3 * q, 7 * q), _cells_in(B, 3 * q, 7 * q), ["x", "y"])
            ov2 = Overlap.build(charts, 0, 1, _cells_in(A, q, 2 * q), _cells_in(B, 9 * q, 10 * q), ["x", "y + 1"])
            self._atlas = AtlasScene(charts, [ov1, ov2])
        return self._atlas

    def chart_laplacian(self, chart):
        """Chart measure ``Delta_phi d_p`` on one chart complex (numeric densities).

        The ac density is the Laplace-Beltrami value; the jump density on the
        cut facet is taken with respect to ``d rho`` and divided by
        ``sqrt(det G) = theta rho`` so that the global measure carries the
        explicit jump density per unit length.
        """
        C = self.atlas().charts[chart].complex
        th = self.theta
        ac = [Fn.numeric(2, lambda P: self.ac_density(P[:, 0], th * P[:, 1])) for _ in C.cells]
        jump = {}
        for f in C.interior_facets:
            s = f.barycenter[1]
            if f.normal == (0, 1) and Fraction(s) % 1 == Fraction(1, 2):
                jump[f.id] = Fn.numeric(2, lambda P: self.explicit_jump_density(P[:, 0]) / (th * P[:, 0]))
        return MeasureField(C, ac, jump)

    def system(self):
        return {0: self.chart_laplacian(0), 1: self.chart_laplacian(1)}


def _cells_in(C, lo, hi):
    return [c.id for c in C.cells if lo <= c.barycenter[1] <= hi]


# ---------------------------------------------------------------------------
# oracles


def _laplace_beltrami_sides(scene):
    """Closed-form gradient and Laplacian of each side's distance expression."""
    rho, phi = sympy.symbols("rho phi", positive=True)
    a, th = sympy.Float(scene.a, 30), sympy.Float(scene.theta, 30)
    out = []
    for gap in (phi, th - phi):
        d = sympy.sqrt(a ** 2 + rho ** 2 - 2 * a * rho * sympy.cos(gap))
        lap = sympy.diff(rho * sympy.diff(d, rho), rho) / rho + sympy.diff(d, phi, 2) / rho ** 2
        out.append(
            (
                sympy.lambdify((rho, phi), sympy.diff(d, rho), "numpy"),
                sympy.lambdify((rho, phi), sympy.diff(d, phi), "numpy"),
                sympy.lambdify((rho, phi), lap, "numpy"),
            )
        )
    return out


def weak_form_oracle(scene, rho_samples, K=20, n_rho=64, n_phi=64, half_width=None):
    """Cut jump density recovered from the weak Laplacian.

    For ``psi_k = P_k(t(rho)) chi(phi)`` with ``chi`` a polynomial bump
    centred on the cut, ``W_k = -int g(grad d, grad psi_k) dv_g
    + int_{arcs} psi_k d_n d - int psi_k Delta^ac d dv_g`` equals
    ``int j P_k d rho``; Legendre orthogonality gives the coefficients of
    ``j``.
    """
    r0, r1 = scene.annulus
    L = r1 - r0
    delta = half_width or min(scene.theta / 4, 0.5)
    c = scene.cut_angle
    sides = _laplace_beltrami_sides(scene)
    xr, wr = legendre.leggauss(n_rho)
    xp, wp = legendre.leggauss(n_phi)
    R = r0 + (xr + 1) * L / 2
    WR = wr * L / 2
    T = (2 * R - r0 - r1) / L
    P = np.stack([legendre.legval(T, np.eye(K)[k]) for k in range(K)])  # (K, n_rho)
    dP = np.stack([legendre.legval(T, legendre.legder(np.eye(K)[k])) * 2 / L for k in range(K)])
    W = np.zeros(K)
    for (d_r, d_p, lap), (p0, p1) in zip(sides, ((c - delta, c), (c, c + delta))):
        Phi = p0 + (xp + 1) * (p1 - p0) / 2
        WP = wp * (p1 - p0) / 2
        u = (Phi - c) / delta
        chi = (1 - u ** 2) ** 4
        dchi = -8 * u * (1 - u ** 2) ** 3 / delta
        RR, PP = np.meshgrid(R, Phi, indexing="ij")
        dr, dp, lp = d_r(RR, PP), d_p(RR, PP), lap(RR, PP)
        wgt = (WR[:, None] * WP[None, :]) * RR  # dv_g = rho d rho d phi
        # -g(grad d, grad psi) - psi lap d, integrated
        for k in range(K):
            psi = P[k][:, None] * chi[None, :]
            psi_r = dP[k][:, None] * chi[None, :]
            psi_p = P[k][:, None] * dchi[None, :]
            integrand = -(dr * psi_r + dp * psi_p / RR ** 2) - psi * lp
            W[k] += np.sum(wgt * integrand)
        # boundary arcs: outward flux at rho1 and rho0 weighted by psi
        for rb, sgn, Pk in ((r1, 1.0, legendre.legval(1.0, np.eye(K).T)), (r0, -1.0, legendre.legval(-1.0, np.eye(K).T))):
            flux = np.sum(WP * chi * d_r(rb, Phi) * rb) * sgn
            W += Pk * flux
    coef = W * (2 * np.arange(K) + 1) / L
    Ts = (2 * np.asarray(rho_samples) - r0 - r1) / L
    return legendre.legval(Ts, coef)


def mass_balance(scene, n=200):
    """``int_A Delta d_p`` from the measure versus the boundary flux of ``grad d_p``."""
    r0, r1 = scene.annulus
    c = scene.cut_angle
    x, w = legendre.leggauss(n)
    R = r0 + (x + 1) * (r1 - r0) / 2
    WR = w * (r1 - r0) / 2
    interior, flux = 0.0, 0.0
    sides = _laplace_beltrami_sides(scene)
    for (d_r, _, _), (p0, p1) in zip(sides, ((0.0, c), (c, scene.theta))):
        Phi = p0 + (x + 1) * (p1 - p0) / 2
        WP = w * (p1 - p0) / 2
        RR, PP = np.meshgrid(R, Phi, indexing="ij")
        interior += np.sum(WR[:, None] * WP[None, :] * RR * scene.ac_density(RR, PP))
        flux += np.sum(WP * d_r(r1, Phi)) * r1 - np.sum(WP * d_r(r0, Phi)) * r0
    jump = float(np.dot(WR, scene.explicit_jump_density(R)))
    return {"ac_mass": interior, "jump_mass": jump, "measure_mass": interior + jump, "boundary_flux": flux,
            "residual": abs(interior + jump - flux) / max(1.0, abs(flux))}


def cut_locus_jump_measure(scene, n_samples=50, K=20):
    """Compare the explicit cut jump density with the weak-form oracle.

    Returns a report with per-sample rows ``(arclength, jump_density,
    oracle_density)`` where arclength is measured from the apex, the chart
    measure on chart A, and the sign and normality checks of the jump
    Hessian.
    """
    r0, r1 = scene.annulus
    rho = np.linspace(r0, r1, n_samples + 2)[1:-1]
    explicit = scene.explicit_jump_density(rho)
    oracle = weak_form_oracle(scene, rho, K=K)
    mu = scene.chart_laplacian(0)
    # density carried by the measure, per unit cut length: chart density times sqrt(det G)
    fid = next(iter(mu.jump)) if mu.jump else None
    if fid is not None:
        s_cut = 0.5
        P = np.stack([rho, np.full_like(rho, s_cut)], axis=1)
        carried = mu.jump[fid](P) * scene.theta * rho
    else:
        carried = np.zeros_like(rho)
    tangential = scene.gradient_jump_tangential(rho)
    err = np.abs(explicit - oracle)
    return {
        "angle": scene.theta,
        "base_radius": scene.a,
        "annulus": list(scene.annulus),
        "rows": [
            {"arclength": float(r), "jump_density": float(e), "oracle_density": float(o)}
            for r, e, o in zip(rho, explicit, oracle)
        ],
        "max_abs_error": float(err.max()),
        "measure_density_error": float(np.max(np.abs(carried - explicit))),
        "max_jump_density": float(explicit.max()),
        "hessian_jump_nonpositive": bool(np.all(explicit <= 0)),
        "max_tangential_jump": float(np.max(np.abs(tangential))),
        "measure": mu,
    }


def angle_regression(angles=("1.9*pi", "1.99*pi", "1.999*pi"), base_radius=1.0, annulus=None, n=200):
    """Largest ``|jump density|`` on the annulus as the angle approaches ``2 pi``."""
    rows = []
    for ang in angles:
        sc = ConeScene(ang, base_radius, annulus)
        rho = np.linspace(*sc.annulus, n)
        rows.append({"angle": float(sc.theta), "label": str(ang),
                     "max_abs_jump": float(np.max(np.abs(sc.explicit_jump_density(rho))))})
    vals = [r["max_abs_jump"] for r in rows]
    return {"rows": rows, "decreasing": all(b < a for a, b in zip(vals, vals[1:])), "final": vals[-1]}


def chart_independence(scene, boxes=None):
    """Global Laplacian box masses from the partition of unity and from each covering chart."""
    r0, r1 = scene.annulus
    fr = lambda x: Fraction(x).limit_denominator(10**6)
    if boxes is None:
        L = r1 - r0
        boxes = [
            ((fr(r0 + 0.1 * L), Fraction(3, 10)), (fr(r0 + 0.8 * L), Fraction(7, 10))),
            ((fr(r0 + 0.2 * L), Fraction(1, 2)), (fr(r0 + 0.9 * L), Fraction(13, 16))),
            ((fr(r0), Fraction(1, 8)), (fr(r1), Fraction(7, 8))),
        ]
    atlas = scene.atlas()
    system = scene.system()
    rows = []
    for lo, hi in boxes:
        res = global_measure(atlas, system, 0, lo, hi)
        rows.append({"lo": [float(c) for c in lo], "hi": [float(c) for c in hi],
                     "partition": float(res["partition"]),
                     "direct": {k: float(v) for k, v in res["direct"].items()}, "spread": float(res["spread"])})
    return {"rows": rows, "max_spread": max(r["spread"] for r in rows)}
