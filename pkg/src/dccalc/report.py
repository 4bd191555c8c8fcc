"""Running a scene and serializing the resulting report (JSON or CSV)."""

import csv
import io
import json
from contextlib import nullcontext

import numpy as np

from .checks import Context, run_check
from .measurefield import numeric_tier
from .scene import SCHEMA_ID, build, load

CSV_FIELDS = ["scene", "id", "kind", "identity", "residual", "tolerance", "pass", "exact", "error",
              "tier", "seed", "quadrature_order"]


def run_scene(source, ctx=None):
    """Validate, build and run every check of a scene.

    Parameters
    ----------
    source : str or dict
        Scene path, JSON text or parsed document.
    ctx : Context, optional
        Tolerance, tier, quadrature order and seed.

    Returns
    -------
    dict
        Report with metadata and one record per check, ordered by check id.
    """
    ctx = ctx or Context()
    doc = load(source)
    sc = build(doc)
    guard = numeric_tier() if ctx.tier == "numeric" else nullcontext()
    with guard:
        records = [run_check(sc, spec, k, ctx) for k, spec in enumerate(doc["checks"])]
    records.sort(key=lambda r: r["id"])
    n_pass = sum(r["pass"] for r in records)
    return {
        "scene": sc.id,
        "schema": SCHEMA_ID,
        "tier": ctx.tier,
        "seed": ctx.seed,
        "tolerance": ctx.tolerance,
        "quadrature_order": ctx.quadrature_order,
        "checks": records,
        "passed": n_pass,
        "failed": len(records) - n_pass,
        "all_pass": n_pass == len(records),
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, np.integer):
        return int(obj)
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)


def to_json(report):
    """Deterministic JSON text (sorted keys, trailing newline)."""
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def to_csv(report):
    """One row per check with the run metadata repeated on each row."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report["checks"]:
        w.writerow({
            "scene": report["scene"], "id": r["id"], "kind": r["kind"], "identity": r["identity"],
            "residual": "" if r["residual"] is None else repr(float(r["residual"])),
            "tolerance": repr(float(r["tolerance"])), "pass": int(r["pass"]), "exact": int(r["exact"]),
            "error": r.get("error", ""), "tier": report["tier"], "seed": report["seed"],
            "quadrature_order": report["quadrature_order"],
        })
    return buf.getvalue()


def rows_to_csv(rows, fields):
    """Generic CSV writer for plot data."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(float(row[k])) if isinstance(row[k], float) else row[k] for k in fields})
    return buf.getvalue()
