from fractions import Fraction as Fr
from math import sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _util import pw
from dccalc.algebra import Fn
from dccalc.atlas import (
    AtlasScene,
    Chart,
    MappedComplex,
    Overlap,
    TransitionMap,
    check_system,
    global_measure,
    starpush_check,
)
from dccalc.cellgeom import grid_complex, interval_complex
from dccalc.errors import CoverageGap, IncompatibleSystem, NotDC0, NotHomeomorphic
from dccalc.measurefield import MeasureField, measure_residual
from dccalc.metric import MetricField, identity_metric
from dccalc.scene import build, load


def test_transition_tiers():
    C = interval_complex([0, 1, 2])
    F = TransitionMap(C, ["2*x"])
    assert F.tier == "affine" and F.sign == 1
    assert [v[0] for v in F.target.vertices] == [0, 2, 4]
    F = TransitionMap(C, ["1 - x"])
    assert F.sign == -1
    F = TransitionMap(C, ["x + x**2/4"])
    assert F.tier == "polynomial" and isinstance(F.target, MappedComplex)
    y = F.map_points(np.array([[0.5], [1.5]]))
    assert np.allclose(F.inverse_points(y), [[0.5], [1.5]], atol=1e-12)


def test_transition_errors():
    C = interval_complex([-1, 0, 1])
    with pytest.raises(NotHomeomorphic):
        TransitionMap(C, ["x**2"])
    with pytest.raises(NotDC0):
        TransitionMap(C, [pw(C, "-x", "x")])
    Q = grid_complex([0, 1], [0, 1])
    with pytest.raises(NotHomeomorphic):
        TransitionMap(Q, ["x + y", "2*x + 2*y"])


@given(st.fractions(Fr(1, 4), 4, max_denominator=8), st.fractions(-2, 2, max_denominator=8))
def test_affine_pullback_pushforward_duality(a, b):
    C = interval_complex([0, Fr(1, 2), 1])
    F = TransitionMap(C, [f"({a})*x + ({b})"])
    mu = MeasureField(F.target, [Fn.from_expr(1, "1 + x**2"), Fn.const(1, 2)],
                      {F.target.interior_facets[0].id: Fn.const(1, 3)})
    back = F.pushforward(MeasureField(C, [p * abs(a) for p in F.pullback_measure(mu).ac],
                                      {k: v * abs(a) for k, v in F.pullback_measure(mu).jump.items()}))
    assert measure_residual(back, mu) == 0


def _two_charts(mu_b_jump=6):
    A = interval_complex([0, Fr(1, 2), Fr(3, 4), 1])
    B = interval_complex([0, Fr(1, 2), 1, 2])
    charts = [Chart("A", A, identity_metric(A)), Chart("B", B, MetricField([[Fr(1, 4)]], B))]
    ov = Overlap.build(charts, 0, 1, [1, 2], [0, 1], ["2*x - 1"])
    scene = AtlasScene(charts, [ov])
    fa = A.locate((Fr(3, 4),))[1]
    fb = B.locate((Fr(1, 2),))[1]
    system = {0: MeasureField(A, [Fn.const(1, 1)] * 3, {fa: Fn.const(1, 3)}),
              1: MeasureField(B, [Fn.const(1, 1)] * 3, {fb: Fn.const(1, mu_b_jump)} if mu_b_jump else {})}
    return scene, system


def test_partition_of_unity_two_charts():
    scene, _ = _two_charts()
    psi_a, psi_b = scene.partition
    assert psi_a.flags.is_DC0 and psi_b.flags.is_DC0
    # independent float evaluation on a 1e3 lattice of chart A
    xs = (np.arange(1000) + 0.5) / 1000
    for x in xs:
        total = float(psi_a.precise_value((Fr(x),)))
        if x > 0.5:
            total += float(psi_b.precise_value((Fr(2 * x - 1),)))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_partition_single_chart_and_gaps():
    C = interval_complex([0, 1])
    scene = AtlasScene([Chart("only", C, identity_metric(C))])
    assert scene.partition[0].equals(pw(C, "1"))
    D = interval_complex([2, 3])
    with pytest.raises(CoverageGap):
        AtlasScene([Chart("a", C), Chart("b", D)])
    with pytest.raises(CoverageGap):
        Overlap.build([Chart("a", C), Chart("b", D)], 0, 1, [], [0], ["x + 2"])


def test_global_measure_single_chart():
    C = grid_complex([0, Fr(1, 2), 1], [0, 1])
    scene = AtlasScene([Chart("only", C, identity_metric(C))])
    r = global_measure(scene, {0: MeasureField.lebesgue(C)}, 0, (Fr(1, 5), Fr(1, 3)), (Fr(3, 4), 1))
    assert r["partition"] == Fr(11, 20) * Fr(2, 3)


def test_global_measure_two_charts():
    scene, system = _two_charts()
    assert check_system(scene, system) == 0
    r = global_measure(scene, system, 0, (Fr(1, 4),), (Fr(7, 8),))
    # Riemannian length 5/8 plus the point mass 3 at 3/4
    assert r["partition"] == Fr(5, 8) + 3
    assert all(v == Fr(5, 8) + 3 for v in r["direct"].values())
    r = global_measure(scene, system, 1, (Fr(1, 4),), (Fr(3, 2),))
    assert r["partition"] == Fr(5, 8) + 3 and r["spread"] == 0


def test_global_measure_total_variation():
    scene, system = _two_charts(mu_b_jump=-6)
    fa = scene.charts[0].complex.locate((Fr(3, 4),))[1]
    system[0] = MeasureField(system[0].complex, system[0].ac, {fa: Fn.const(1, -3)})
    r = global_measure(scene, system, 0, (Fr(1, 2),), (1,))
    assert r["partition"] == Fr(1, 2) - 3
    tv = {k: MeasureField(m.complex, m.ac, {f: d * -1 for f, d in m.jump.items()}) for k, m in system.items()}
    r = global_measure(scene, tv, 0, (Fr(1, 2),), (1,))
    assert r["partition"] == Fr(1, 2) + 3 and r["spread"] == 0


def test_incompatible_system():
    scene, system = _two_charts(mu_b_jump=0)
    with pytest.raises(IncompatibleSystem):
        check_system(scene, system)
    with pytest.raises(IncompatibleSystem):
        global_measure(scene, system, 0, (0,), (1,))


def test_starpush_identity_and_double():
    C = interval_complex([0, Fr(1, 2), 1])
    F = TransitionMap(C, ["x"])
    mu = MeasureField(F.target, [Fn.from_expr(1, "x"), Fn.const(1, 1)], {F.target.interior_facets[0].id: Fn.const(1, 2)})
    assert starpush_check(F, mu, G_target=identity_metric(F.target))["residual"] == 0
    F = TransitionMap(C, ["2*x"])
    Gt = identity_metric(F.target)
    mu = MeasureField.lebesgue(F.target)
    r = starpush_check(F, mu, G_target=Gt, boxes=[((0,), (2,)), ((Fr(1, 3),), (Fr(3, 2),))])
    assert r["residual"] == 0
    assert r["boxes"] == [(2, 2), (Fr(7, 6), Fr(7, 6))]
    # source data: G = 4, sqrt det G = 2, F*(L) = L
    assert measure_residual(F.pullback_measure(mu), MeasureField.lebesgue(C)) == 0


def test_starpush_nonlinear_point_mass():
    doc = {
        "schema": "dccalc-scene/1", "id": "pm", "dimension": 1,
        "complex": {"breaks": [["0", "1/2", "1"]]},
        "maps": {"q": {"components": ["x + x**2/4"], "target_metric": {"components": [["1 + x**2"]]}}},
        "measures": {"d": {"on": "q", "jumps": [{"at": ["9/16"], "density": 1}]}},
        "checks": [{"id": "s", "kind": "starpush", "map": "q", "measure": "d"}],
    }
    sc = build(load(doc))
    F = sc.maps["q"]
    r = starpush_check(F, sc.measures["d"], G_target=sc.target_metrics["q"], boxes=[((Fr(1, 2),), (Fr(3, 4),))])
    a, b = r["boxes"][0]
    assert float(a) == pytest.approx(sqrt(1 + (9 / 16) ** 2), abs=1e-10)
    assert float(b) == pytest.approx(sqrt(1 + (9 / 16) ** 2), abs=1e-12)
