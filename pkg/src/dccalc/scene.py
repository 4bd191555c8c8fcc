"""Scene files (schema ``dccalc-scene/1``): validation and construction.

A scene is a JSON document describing a complex, functions, a metric,
vector fields, transition maps, measures, optional atlas data and the list
of checks to run.  Numbers may be given as JSON numbers or as rational
strings such as ``"1/3"``; functions are sympy expressions in ``x, y, z``
(or ``x1, x2, x3``).
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import jsonschema
import sympy

from .algebra import Fn, symbols
from .atlas import AtlasScene, Chart, Overlap, TransitionMap
from .cellgeom import box_complex, build_complex, parse_rational
from .errors import SchemaError
from .measurefield import MeasureField
from .metric import MetricField, identity_metric
from .pwalg import PiecewiseScalar
from .tensorcalc import VectorField

SCHEMA_ID = "dccalc-scene/1"

_number = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_expr = {"oneOf": [{"type": "string"}, {"type": "number"}]}
_point = {"type": "array", "items": _number, "minItems": 1, "maxItems": 3}

_complex = {
    "type": "object",
    "oneOf": [
        {"required": ["breaks"]},
        {"required": ["vertices", "cells"]},
    ],
    "properties": {
        "breaks": {"type": "array", "items": {"type": "array", "items": _number, "minItems": 2}, "minItems": 1, "maxItems": 3},
        "vertices": {"type": "array", "items": _point, "minItems": 2},
        "cells": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "minItems": 1},
    },
    "additionalProperties": False,
}

_function = {
    "oneOf": [
        _expr,
        {
            "type": "object",
            "properties": {
                "expr": _expr,
                "pieces": {"type": "array", "items": _expr},
                "piecewise": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["where", "expr"],
                        "properties": {"where": {"type": "string"}, "expr": _expr},
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
    ]
}

_metric = {
    "type": "object",
    "required": ["components"],
    "properties": {
        "components": {"type": "array", "items": {"type": "array", "items": _expr}},
        "declared_c": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_measure = {
    "type": "object",
    "properties": {
        "ac": _function,
        "jumps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["at", "density"],
                "properties": {"at": _point, "density": _expr},
                "additionalProperties": False,
            },
        },
        "on": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "id", "dimension", "checks"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "id": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
        "complex": _complex,
        "functions": {"type": "object", "additionalProperties": _function},
        "metric": _metric,
        "vector_fields": {"type": "object", "additionalProperties": {"type": "array", "items": _expr}},
        "maps": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["components"],
                "properties": {
                    "components": {"type": "array", "items": _expr},
                    "target_metric": _metric,
                },
                "additionalProperties": False,
            },
        },
        "measures": {"type": "object", "additionalProperties": _measure},
        "atlas": {
            "type": "object",
            "required": ["charts"],
            "properties": {
                "charts": {
                    "type": "array",
                    "minItems": 1,
                    "maxItems": 4,
                    "items": {
                        "type": "object",
                        "required": ["name", "complex"],
                        "properties": {
                            "name": {"type": "string"},
                            "complex": _complex,
                            "metric": _metric,
                            "gluing_axis": {"type": "integer", "minimum": 0},
                        },
                        "additionalProperties": False,
                    },
                },
                "overlaps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["alpha", "beta", "cells_alpha", "cells_beta", "map"],
                        "properties": {
                            "alpha": {"type": "integer", "minimum": 0},
                            "beta": {"type": "integer", "minimum": 0},
                            "cells_alpha": {"type": "array", "items": {"type": "integer"}},
                            "cells_beta": {"type": "array", "items": {"type": "integer"}},
                            "map": {"type": "array", "items": _expr},
                        },
                        "additionalProperties": False,
                    },
                },
                "systems": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": _measure},
                },
            },
            "additionalProperties": False,
        },
        "checks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {"id": {"type": "string"}, "kind": {"type": "string"}, "tolerance": {"type": "number"}},
            },
        },
    },
    "additionalProperties": False,
}


def format_path(parts):
    """``["metric", "components", 0, 1]`` -> ``"metric.components[0][1]"``."""
    out = ""
    for p in parts:
        if isinstance(p, int):
            out += f"[{p}]"
        else:
            out += ("." if out else "") + str(p)
    return out or "<root>"


def validate(doc):
    """Structural validation; raises :class:`SchemaError` with the offending path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise SchemaError(format_path(list(err.absolute_path)), err.message)
    _check_metric_symmetry(doc.get("metric"), ["metric"])
    for k, ch in enumerate(doc.get("atlas", {}).get("charts", [])):
        _check_metric_symmetry(ch.get("metric"), ["atlas", "charts", k, "metric"])
    for name, m in doc.get("maps", {}).items():
        _check_metric_symmetry(m.get("target_metric"), ["maps", name, "target_metric"])
    N = doc["dimension"]
    if "complex" in doc:
        _check_complex_dim(doc["complex"], N, ["complex"])
    ids = [c["id"] for c in doc["checks"]]
    seen = set()
    for k, i in enumerate(ids):
        if i in seen:
            raise SchemaError(format_path(["checks", k, "id"]), f"duplicate check id {i!r}")
        seen.add(i)


def _check_metric_symmetry(metric, path):
    if metric is None:
        return
    comps = metric["components"]
    n = len(comps)
    for i, row in enumerate(comps):
        if len(row) != n:
            raise SchemaError(format_path(path + ["components", i]), "metric must be square")
    for i in range(n):
        for j in range(i + 1, n):
            a, b = _sym(comps[i][j]), _sym(comps[j][i])
            if sympy.simplify(a - b) != 0:
                raise SchemaError(format_path(path + ["components", i, j]),
                                  f"metric is not symmetric: {comps[i][j]!r} != {comps[j][i]!r}")


def _check_complex_dim(cx, N, path):
    if "breaks" in cx:
        if len(cx["breaks"]) != N:
            raise SchemaError(format_path(path + ["breaks"]), f"need {N} break lists")
    else:
        for k, v in enumerate(cx["vertices"]):
            if len(v) != N:
                raise SchemaError(format_path(path + ["vertices", k]), f"vertex must have {N} coordinates")


def _locals(N):
    loc = {s.name: s for s in symbols(N)}
    for alias, k in (("x", 0), ("y", 1), ("z", 2)):
        if k < N:
            loc[alias] = symbols(N)[k]
    return loc


def _sym(e, N=3):
    return sympy.sympify(str(e), locals=_locals(N))


def load(path_or_doc):
    """Read and validate a scene (path, JSON text or already-parsed dict)."""
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        text = str(path_or_doc)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text) as fh:
                doc = json.load(fh)
    validate(doc)
    return doc


def bundled_names():
    root = resources.files("dccalc") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name):
    p = resources.files("dccalc") / "scenes" / f"{name}.json"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled scene named {name!r}")
    return str(p)


# ---------------------------------------------------------------------------
# construction


def build_cx(spec, path):
    try:
        if "breaks" in spec:
            return box_complex([[parse_rational(b) for b in axis] for axis in spec["breaks"]])
        verts = [tuple(parse_rational(c) for c in v) for v in spec["vertices"]]
        return build_complex(verts, spec["cells"])
    except SchemaError:
        raise
    except Exception as exc:
        raise SchemaError(format_path(path), f"{type(exc).__name__}: {exc}") from exc


def build_function(spec, C, path):
    """PiecewiseScalar from an expression, a per-cell list, or ``where`` clauses."""
    N = C.N
    try:
        if not isinstance(spec, dict):
            return PiecewiseScalar(C, [Fn.from_expr(N, str(spec))] * len(C.cells))
        if "expr" in spec:
            return PiecewiseScalar(C, [Fn.from_expr(N, str(spec["expr"]))] * len(C.cells))
        if "pieces" in spec:
            if len(spec["pieces"]) != len(C.cells):
                raise SchemaError(format_path(path + ["pieces"]), f"need {len(C.cells)} pieces")
            return PiecewiseScalar(C, [Fn.from_expr(N, str(e)) for e in spec["pieces"]])
        pieces = []
        loc = _locals(N)
        for cell in C.cells:
            subs = {symbols(N)[i]: sympy.Rational(cell.barycenter[i].numerator, cell.barycenter[i].denominator)
                    for i in range(N)}
            for k, clause in enumerate(spec["piecewise"]):
                cond = sympy.sympify(clause["where"], locals=loc)
                if bool(cond.subs(subs)):
                    pieces.append(Fn.from_expr(N, str(clause["expr"])))
                    break
            else:
                raise SchemaError(format_path(path + ["piecewise"]), f"no clause covers cell {cell.id}")
        return PiecewiseScalar(C, pieces)
    except SchemaError:
        raise
    except Exception as exc:
        raise SchemaError(format_path(path), f"{type(exc).__name__}: {exc}") from exc


def build_metric(spec, C, path):
    if spec is None:
        return identity_metric(C)
    comps = spec["components"]
    if len(comps) != C.N:
        raise SchemaError(format_path(path + ["components"]), f"metric must be {C.N}x{C.N}")
    try:
        entries = [[Fn.from_expr(C.N, str(e)) for e in row] for row in comps]
        return MetricField(entries, C, declared_c=spec.get("declared_c"))
    except Exception as exc:
        raise SchemaError(format_path(path), f"{type(exc).__name__}: {exc}") from exc


def build_measure(spec, C, path):
    N = C.N
    ac_spec = spec.get("ac", 0)
    ac = build_function(ac_spec, C, path + ["ac"]).pieces if ac_spec != 0 else [None] * len(C.cells)
    jump = {}
    for k, j in enumerate(spec.get("jumps", [])):
        pt = tuple(parse_rational(c) for c in j["at"])
        try:
            kind, fid = C.locate(pt)
        except Exception as exc:
            raise SchemaError(format_path(path + ["jumps", k, "at"]), str(exc)) from exc
        if kind != "facet" or C.facets[fid].is_boundary:
            raise SchemaError(format_path(path + ["jumps", k, "at"]), "point does not lie on an interior facet")
        jump[fid] = Fn.from_expr(N, str(j["density"]))
    return MeasureField(C, ac, jump)


@dataclass
class Scene:
    """Built objects of a validated scene document."""

    doc: dict
    id: str
    N: int
    complex: object = None
    metric: object = None
    functions: dict = field(default_factory=dict)
    vector_fields: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    target_metrics: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    atlas: object = None
    systems: dict = field(default_factory=dict)

    @property
    def checks(self):
        return self.doc["checks"]


def build(doc):
    """Construct every object of a validated document."""
    N = doc["dimension"]
    sc = Scene(doc, doc["id"], N)
    if "complex" in doc:
        C = build_cx(doc["complex"], ["complex"])
        sc.complex = C
        sc.metric = build_metric(doc.get("metric"), C, ["metric"])
        for name, spec in doc.get("functions", {}).items():
            sc.functions[name] = build_function(spec, C, ["functions", name])
        for name, comps in doc.get("vector_fields", {}).items():
            if len(comps) != N:
                raise SchemaError(format_path(["vector_fields", name]), f"need {N} components")
            vf = []
            for k, c in enumerate(comps):
                if isinstance(c, str) and c in sc.functions:
                    vf.append(sc.functions[c])
                else:
                    vf.append(build_function(c, C, ["vector_fields", name, k]))
            sc.vector_fields[name] = VectorField(vf)
        for name, spec in doc.get("maps", {}).items():
            try:
                F = TransitionMap(C, [str(c) for c in spec["components"]], name=name)
            except Exception as exc:
                raise SchemaError(format_path(["maps", name]), f"{type(exc).__name__}: {exc}") from exc
            sc.maps[name] = F
            sc.target_metrics[name] = build_metric(spec.get("target_metric"), F.target, ["maps", name, "target_metric"])
        for name, spec in doc.get("measures", {}).items():
            target = C
            if "on" in spec:
                if spec["on"] not in sc.maps:
                    raise SchemaError(format_path(["measures", name, "on"]), f"unknown map {spec['on']!r}")
                target = sc.maps[spec["on"]].target
            sc.measures[name] = build_measure(spec, target, ["measures", name])
    if "atlas" in doc:
        at = doc["atlas"]
        charts = []
        for k, ch in enumerate(at["charts"]):
            Ck = build_cx(ch["complex"], ["atlas", "charts", k, "complex"])
            charts.append(Chart(ch["name"], Ck, build_metric(ch.get("metric"), Ck, ["atlas", "charts", k, "metric"]),
                                ch.get("gluing_axis", 0)))
        overlaps = []
        for k, ov in enumerate(at.get("overlaps", [])):
            for key in ("alpha", "beta"):
                if ov[key] >= len(charts):
                    raise SchemaError(format_path(["atlas", "overlaps", k, key]), "unknown chart index")
            try:
                overlaps.append(Overlap.build(charts, ov["alpha"], ov["beta"], ov["cells_alpha"], ov["cells_beta"],
                                              [str(c) for c in ov["map"]]))
            except Exception as exc:
                raise SchemaError(format_path(["atlas", "overlaps", k]), f"{type(exc).__name__}: {exc}") from exc
        sc.atlas = AtlasScene(charts, overlaps)
        for name, specs in at.get("systems", {}).items():
            if len(specs) != len(charts):
                raise SchemaError(format_path(["atlas", "systems", name]), "need one measure per chart")
            sc.systems[name] = {k: build_measure(s, charts[k].complex, ["atlas", "systems", name, k])
                                for k, s in enumerate(specs)}
    return sc
