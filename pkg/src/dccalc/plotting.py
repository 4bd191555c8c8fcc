"""Figures for reports: residual bars, Taylor decay and the cone jump density."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_FLOOR = 1e-18


def residual_bars(report, path):
    """Log-scale bar chart of check residuals against their tolerances."""
    recs = report["checks"]
    ids = [r["id"] for r in recs]
    res = [max(r["residual"] or 0.0, _FLOOR) if r["residual"] is not None else np.nan for r in recs]
    colors = ["tab:green" if r["pass"] else "tab:red" for r in recs]
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(ids) + 2), 4))
    x = np.arange(len(ids))
    ax.bar(x, res, color=colors)
    ax.scatter(x, [r["tolerance"] for r in recs], marker="_", s=200, color="k", label="tolerance")
    ax.set_yscale("log")
    ax.set_ylim(_FLOOR / 10, 10)
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=70, ha="right", fontsize=7)
    ax.set_ylabel("residual (0 drawn at 1e-18)")
    ax.set_title(f"{report['scene']} ({report['tier']} tier)")
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def taylor_decay(record, path):
    """Median and worst remainder ratio ``|R| / r^2`` per radius."""
    d = record["details"]
    radii = np.asarray(d["radii"], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(radii, np.maximum(d["worst_ratio"], _FLOOR), "o-", label="worst")
    ax.loglog(radii, np.maximum(d["median_ratio"], _FLOOR), "s--", label="median")
    ax.set_xlabel("radius r")
    ax.set_ylabel("|remainder| / r^2")
    ax.set_title(record["id"])
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def cone_jump(rows, path, title=None):
    """Explicit cut-locus jump density against the weak-form oracle."""
    s = np.array([r["arclength"] for r in rows])
    j = np.array([r["jump_density"] for r in rows])
    o = np.array([r["oracle_density"] for r in rows])
    fig, (ax, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True, gridspec_kw={"height_ratios": [3, 1]})
    ax.plot(s, j, "-", label="explicit")
    ax.plot(s, o, ".", label="weak-form oracle")
    ax.set_ylabel("jump density")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    ax2.semilogy(s, np.maximum(np.abs(j - o), _FLOOR), ".")
    ax2.set_xlabel("distance from apex along the cut")
    ax2.set_ylabel("|difference|")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
