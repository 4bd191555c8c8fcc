"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
"""

import time
from fractions import Fraction as Fr

import numpy as np
import pytest

from _util import pw
from dccalc.algebra import Fn
from dccalc.cellgeom import QuadratureRule, grid_complex, interval_complex
from dccalc.checks import Context
from dccalc.conedemo import ConeScene, angle_regression, chart_independence, cut_locus_jump_measure
from dccalc.connection import christoffel
from dccalc.dcops import gamma2_check, geod_identity_check, ibp_check, laplacian_divergence, laplacian_trace
from dccalc.errors import BothFactorsJump
from dccalc.measurefield import (
    MeasureField,
    derivative,
    measure_residual,
    numeric_tier,
    product_rule,
    weak_derivative_pairing,
)
from dccalc.metric import MetricField, identity_metric
from dccalc.metric import test_panel as polynomial_panel
from dccalc.report import run_scene
from dccalc.scene import bundled_names, bundled_path

RNG_SEED = 20240611


def announce(n, ok, text):
    line = f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {text}"
    print("\n" + line)
    return ok


@pytest.fixture(scope="module")
def reports():
    return {name: run_scene(bundled_path(name), Context()) for name in bundled_names()}


def records(reports, kind, scenes=None):
    out = []
    for name, rep in reports.items():
        if scenes is not None and name not in scenes:
            continue
        out += [(name, r) for r in rep["checks"] if r["kind"] == kind]
    return out


# -- random piecewise functions -------------------------------------------------


def _coef(rng):
    return Fr(int(rng.integers(-5, 6)), int(rng.integers(1, 5)))


def _poly(rng, N, deg=2):
    names = "xy"[:N]
    terms = []
    for e in range(deg + 1):
        for a in range(e + 1):
            if N == 1 and a < e:
                continue
            mono = "*".join([f"{names[0]}**{a}"] + ([f"y**{e - a}"] if N == 2 else []))
            terms.append(f"({_coef(rng)})*{mono}")
    return " + ".join(terms)


def _breaks(rng, k):
    inner = sorted({Fr(int(v), 8) for v in rng.integers(-7, 8, k)})
    return [-1] + inner + [1]


def random_complex(rng, N):
    if N == 1:
        return interval_complex(_breaks(rng, 3))
    return grid_complex(_breaks(rng, 2), _breaks(rng, 1))


def random_bv(rng, C):
    """Independent polynomial on every cell (jumps on every interior facet)."""
    return pw(C, *[_poly(rng, C.N) for _ in C.cells])


def random_bv0(rng, C):
    """Continuous: a polynomial plus kinks ``a |x_i - b|`` placed on the break lines."""
    base = _poly(rng, C.N)
    kinks = []
    for i, name in enumerate("xy"[:C.N]):
        cuts = sorted({v[i] for v in C.vertices})[1:-1]
        for b in cuts:
            kinks.append((i, name, b, _coef(rng)))
    exprs = []
    for cell in C.cells:
        e = base
        for i, name, b, a in kinks:
            s = 1 if cell.barycenter[i] > b else -1
            e += f" + ({a * s})*({name} - ({b}))"
        exprs.append(e)
    return pw(C, *exprs)


# -- criteria -------------------------------------------------------------------


def test_criterion_01_weak_derivative():
    rng = np.random.default_rng(RNG_SEED)
    t0 = time.perf_counter()
    exact_worst, numeric_worst, n_pairs = 0, 0.0, 0
    rule = QuadratureRule.of_order(16)
    for k in range(20):
        C = random_complex(rng, 1 if k < 10 else 2)
        f = random_bv(rng, C)
        panel = polynomial_panel(C, 6)
        for i in range(C.N):
            D = derivative(f, i)
            for phi in panel:
                a, b = weak_derivative_pairing(f, i, phi), D.pair(phi)
                exact_worst = max(exact_worst, abs(a - b))
                with numeric_tier():
                    an, bn = weak_derivative_pairing(f, i, phi, rule), D.pair(phi, rule)
                numeric_worst = max(numeric_worst, abs(float(an) - float(bn)) / max(1.0, abs(float(an))))
                n_pairs += 1
    dt = time.perf_counter() - t0
    ok = exact_worst == 0 and numeric_worst <= 1e-9 and dt < 10
    assert announce(1, ok, f"weak derivative, 20 functions, {n_pairs} pairings: exact residual {exact_worst}, "
                           f"numeric {numeric_worst:.2e} (order 16), {dt:.1f} s")


def test_criterion_02_product_rule():
    rng = np.random.default_rng(RNG_SEED + 2)
    worst = 0
    for k in range(20):
        C = random_complex(rng, 1 if k < 10 else 2)
        f, h = random_bv(rng, C), random_bv0(rng, C)
        assert h.flags.is_BV0
        for i in range(C.N):
            worst = max(worst, measure_residual(derivative(f * h, i), product_rule(f, h, i)))
    raised = 0
    for k in range(4):
        C = random_complex(rng, 1 if k < 2 else 2)
        try:
            product_rule(random_bv(rng, C), random_bv(rng, C), 0)
        except BothFactorsJump:
            raised += 1
    ok = worst == 0 and raised == 4
    assert announce(2, ok, f"product rule, 20 (BV, BV0) pairs: residual {worst}; jump x jump raised {raised}/4")


def test_criterion_03_chain_rule(reports):
    recs = records(reports, "chain_rule", {"maps1d", "maps2d"})
    affine = [r["residual"] for _, r in recs if r["details"]["tier"] == "affine"]
    nonlin = [r["residual"] for _, r in recs if r["details"]["tier"] != "affine"]
    parabola = [r["residual"] for _, r in recs if "parabola" in r["id"]]
    ok = affine and all(v == 0 for v in affine) and parabola and max(nonlin) <= 1e-8
    assert announce(3, bool(ok), f"chain rule: affine residuals {affine}; nonlinear max {max(nonlin):.2e} "
                                 f"(F = (x, y + x^2): {max(parabola):.2e})")


def test_criterion_04_christoffel_law(reports):
    recs = records(reports, "christoffel_transform", {"maps1d", "maps2d"})
    affine = [r["residual"] for _, r in recs if r["details"]["tier"] == "affine"]
    parabola = [r["residual"] for _, r in recs if r["id"] == "christoffel-law-parabola"]
    nonlin = [r["residual"] for _, r in recs if r["details"]["tier"] != "affine"]
    ok = all(v == 0 for v in affine) and parabola and max(nonlin) <= 1e-8
    assert announce(4, bool(ok), f"Christoffel transformation: affine {affine}; nonlinear max {max(nonlin):.2e}, "
                                 f"identity target metric {parabola[0]:.2e}")


def test_criterion_05_tensor_compatibility(reports):
    recs = records(reports, "tensor_compatibility", {"maps1d", "maps2d"})
    orders = {(r["inputs"]["order"], r["details"]["tier"]) for _, r in recs}
    affine = [r["residual"] for _, r in recs if r["details"]["tier"] == "affine"]
    nonlin = [r["residual"] for _, r in recs if r["details"]["tier"] != "affine"]
    full = {(p, t) for p in (1, 2) for t in ("affine", "polynomial")} <= orders
    ok = full and all(v == 0 for v in affine) and max(nonlin) <= 1e-8
    assert announce(5, ok, f"tensor compatibility p in {{1, 2}}, both tiers: affine {affine}; "
                           f"nonlinear max {max(nonlin):.2e}")


def test_criterion_06_hessian_identity(reports):
    recs = records(reports, "hessian_identity")
    res = [r["residual"] for _, r in recs]
    cases = {c for _, r in recs for c, fids in r["details"]["cases"].items() if fids}
    ok = all(v == 0 for v in res) and cases == {"Y_only", "df_only", "both"}
    assert announce(6, ok, f"Hessian identity on {len(recs)} configurations: residuals {sorted(set(res))}, "
                           f"jump cases covered {sorted(cases)}")


def _laplacian_suite():
    """(label, f, G, psi, expected Laplacian or None); at least ten configurations."""
    C1 = interval_complex([-1, 0, 1])
    F1 = C1.interior_facets[0].id
    ann = grid_complex([1, Fr(3, 2), 2], [0, Fr(1, 2), 1])
    sq = grid_complex([-1, 0, 1], [-1, 0, 1])
    bump2 = pw(sq, "(1 - x**2)**2*(1 - y**2)**2")
    polar = MetricField([[1, 0], [0, "x**2"]], ann)
    kinked = ["-x - 2*y + x*y", "-x + 2*y + x*y", "x - 2*y + x*y", "x + 2*y + x*y"]
    return [
        ("|x|, G=1", pw(C1, "-x", "x"), identity_metric(C1), pw(C1, "1 - x**2"),
         MeasureField(C1, [0, 0], {F1: 2})),
        ("|x| + x^3, G=1+x^2", pw(C1, "-x + x**3", "x + x**3"), MetricField([["1 + x**2"]], C1),
         pw(C1, "(1 - x**2)**2"), None),
        ("max(x, 2x), G=4", pw(C1, "x", "2*x"), MetricField([[4]], C1), pw(C1, "1 - x**2"), None),
        ("r on annulus", pw(ann, "x"), polar, pw(ann, "(x - 1)**2*(x - 2)**2*y*(1 - y)"),
         MeasureField.lebesgue(ann, Fn.from_expr(2, "1/x"))),
        ("kinked r on annulus", pw(ann, "x", "x", "x + (x - 3/2)*y", "x + (x - 3/2)*y"), polar,
         pw(ann, "(x - 1)**2*(x - 2)**2*y**2*(1 - y)**2"), None),
        ("|x| + 2|y| + xy, constant G", pw(sq, *kinked), MetricField([[2, 1], [1, 1]], sq), bump2, None),
        ("|x| + 2|y| + xy, G=I", pw(sq, *kinked), identity_metric(sq), bump2, None),
        ("quadratic, varying G", pw(sq, "x**2 - x*y + y"), MetricField([["1 + x**2", "x*y/2"], ["x*y/2", "1 + y**2"]], sq),
         bump2, None),
        ("|y| x, diagonal G", pw(sq, "-x*y", "x*y", "-x*y", "x*y") if False else
         pw(sq, *[("-" if k % 2 == 0 else "") + "x*y" for k in range(4)]), MetricField([["1 + y**2", 0], [0, 2]], sq),
         bump2, None),
        ("step-kink, G=I", pw(sq, "0", "0", "x", "x*(1 + y)"), identity_metric(sq), bump2, None),
    ]


def test_criterion_07_laplacian_and_ibp(reports):
    worst_forms, worst_ibp, worst_expected, n = 0.0, 0.0, 0.0, 0
    absx = None
    for label, f, G, psi, expected in _laplacian_suite():
        Gam = christoffel(G)
        tr = laplacian_trace(f, G, Gam)
        worst_forms = max(worst_forms, float(measure_residual(tr, laplacian_divergence(f, G))))
        if expected is not None:
            worst_expected = max(worst_expected, float(measure_residual(tr, expected)))
        r = ibp_check(f, psi, G, Gam)
        worst_ibp = max(worst_ibp, float(r["residual"]))
        if label.startswith("|x|,"):
            absx = (r["lhs"], r["rhs"])
        n += 1
    for _, rec in records(reports, "laplacian_forms") + records(reports, "ibp"):
        worst_forms = max(worst_forms, float(rec["residual"]))
    ok = n >= 10 and max(worst_forms, worst_ibp, worst_expected) <= 1e-9 and absx == (-2, -2)
    assert announce(7, ok, f"Laplacian forms / IBP on {n} configurations plus bundled scenes: forms {worst_forms:.2e}, "
                           f"IBP {worst_ibp:.2e}, closed forms {worst_expected:.2e}; |x| sides {absx}")


def test_criterion_08_geodesic_and_gamma2(reports):
    C1 = interval_complex([-1, 0, 1])
    G1 = identity_metric(C1)
    Gam = christoffel(G1)
    geo = [geod_identity_check(pw(C1, "-x", "x"), G1, Gam)["residual"],
           geod_identity_check(pw(C1, "x", "2*x"), G1, Gam)["residual"]]
    g2 = gamma2_check(pw(C1, "-x", "x"), pw(C1, "x"), pw(C1, "(1 - x**2)**2"), G1, Gam)["residual"]
    sq = grid_complex([-1, 0, 1], [-1, 0, 1])
    Gs = identity_metric(sq)
    g2b = gamma2_check(pw(sq, "-x", "-x", "x", "x"), pw(sq, "x + y**2"), pw(sq, "(1 - x**2)**2*(1 - y**2)**2"), Gs,
                       christoffel(Gs))["residual"]
    scene = [r["residual"] for _, r in records(reports, "geodesic") + records(reports, "gamma2")]
    ok = all(v == 0 for v in geo) and g2 == 0 and g2b <= 1e-9 and max(scene) <= 1e-9
    assert announce(8, ok, f"geodesic identity {geo} (jump cancellations); Gamma2 |x|/x/bump {g2}, "
                           f"product bump {g2b:.2e}; bundled scenes max {max(scene):.2e}")


def test_criterion_09_frame_invariance_and_cauchy_schwarz(reports):
    fr = records(reports, "frame_invariance")
    cs = records(reports, "cauchy_schwarz")
    fr_ok = all(r["details"]["frames"] >= 10 and r["residual"] <= 1e-10 for _, r in fr)
    cs_ok = all(r["details"]["boxes"] >= 100 and r["pass"] for _, r in cs)
    witness = [r["details"]["witness_ratio"] for _, r in cs if r["details"]["witness_ratio"] is not None]
    ok = fr and cs and fr_ok and cs_ok and min(witness) >= 0.999
    assert announce(9, bool(ok), f"frame invariance on {len(fr)} tensors (max {max(r['residual'] for _, r in fr):.2e}); "
                                 f"Cauchy-Schwarz on {len(cs)} scenes x 100 boxes, witness ratio min {min(witness):.6f}")


def test_criterion_10_global_measure_and_starpush(reports):
    gm = records(reports, "global_measure")
    sp = records(reports, "starpush")
    vals = [r["residual"] for _, r in gm + sp]
    cone = chart_independence(ConeScene("3pi/2"))["max_spread"]
    ok = gm and sp and all(r["pass"] for _, r in gm + sp) and max(vals) <= 1e-9 and cone <= 1e-9
    assert announce(10, bool(ok), f"global measure ({len(gm)} checks) and starpush ({len(sp)} checks): "
                                  f"max box disagreement {max(vals):.2e}; cone two-chart spread {cone:.2e}")


def test_criterion_11_taylor(reports):
    recs = records(reports, "taylor")
    radii_ok = all(r["details"]["radii"] == [1e-1, 1e-2, 1e-3, 1e-4] for _, r in recs)
    points_ok = all(r["details"]["rows"] >= 50 for _, r in recs)
    decay = [r["details"]["worst_decay"] for _, r in recs if r["details"]["worst_decay"] is not None]
    ok = recs and radii_ok and points_ok and all(r["pass"] for _, r in recs)
    assert announce(11, bool(ok), f"Taylor remainder on {len(recs)} functions x 50 interior points: "
                                  f"worst per-decade decay factor {min(decay):.2f} (need >= 2)")


def test_criterion_12_cone():
    t0 = time.perf_counter()
    sc = ConeScene("3pi/2", 1.0)
    rep = cut_locus_jump_measure(sc, n_samples=50)
    reg = angle_regression()
    dt = time.perf_counter() - t0
    ok = (len(rep["rows"]) == 50 and rep["max_abs_error"] <= 1e-6 and rep["hessian_jump_nonpositive"]
          and reg["final"] < 1e-3 and reg["decreasing"] and dt < 60)
    assert announce(12, ok, f"cone 3pi/2: oracle error {rep['max_abs_error']:.2e} at 50 samples, max jump density "
                            f"{rep['max_jump_density']:.3f} <= 0, regression final {reg['final']:.2e}, {dt:.1f} s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
