"""PNG figures for the report path, drawn next to the delimited tables."""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .influence import COMPARISONS, DevDiffRecord, critical_values, split_pairs  # noqa: E402
from .report import CurveTable, SmoothedResiduals  # noqa: E402

TITLES = {"fp2_null": "FP2 vs null", "fp2_linear": "FP2 vs linear", "fp2_fp1": "FP2 vs FP1"}
LINESTYLES = ("--", ":", "-.")


def _save(fig, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp.png"
    fig.savefig(tmp, dpi=110, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)
    return str(path)


def _thresholds(ax, comparison: str, alphas: Sequence[float]) -> None:
    j = COMPARISONS.index(comparison)
    for a, ls in zip(alphas, LINESTYLES):
        c = critical_values(a)[j]
        ax.axhline(c, color="0.3", ls=ls, lw=1, label=f"critical value, alpha={a:g}")


def plot_scan(records: Sequence[DevDiffRecord], x_by_id: Mapping[int, float], path, alphas=(0.05, 0.01),
              variable: str = "", flagged: Sequence[int] = ()) -> str:
    """Deviance differences after each single deletion, against the deleted point's x."""
    ids = [r.deleted[0] for r in records]
    xs = np.array([x_by_id[i] for i in ids])
    flagged = set(flagged)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for ax, comp in zip(axes, COMPARISONS):
        dd = np.array([getattr(r, f"dd_{comp}") for r in records])
        mark = np.array([i in flagged for i in ids], dtype=bool)
        ax.scatter(xs[~mark], dd[~mark], s=10, color="0.45")
        ax.scatter(xs[mark], dd[mark], s=22, color="C3")
        for i, xv, dv in zip(np.array(ids)[mark], xs[mark], dd[mark]):
            ax.annotate(str(i), (xv, dv), fontsize=7, xytext=(3, 3), textcoords="offset points")
        _thresholds(ax, comp, alphas)
        ax.set_title(TITLES[comp])
        ax.set_xlabel(f"{variable} of deleted observation" if variable else "x of deleted observation")
    axes[0].set_ylabel("deviance difference")
    axes[-1].legend(fontsize=7, loc="best")
    return _save(fig, path)


def plot_pair_groups(records: Sequence[DevDiffRecord], ip_set, path, alphas=(0.05, 0.01), variable: str = "") -> str:
    """Boxplots of pair-deletion deviance differences for groups G1, G2 and G3."""
    groups = split_pairs(records, ip_set)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for ax, comp in zip(axes, COMPARISONS):
        data, labels = [], []
        for g in ("G1", "G2", "G3"):
            vals = np.array([getattr(r, f"dd_{comp}") for r in groups[g]], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                data.append(vals)
                labels.append(f"{g}\n(n={vals.size})")
        if data:
            ax.boxplot(data, showfliers=True, flierprops={"markersize": 2})
            ax.set_xticks(range(1, len(labels) + 1), labels)
        _thresholds(ax, comp, alphas)
        ax.set_title(TITLES[comp])
    axes[0].set_ylabel("deviance difference")
    if variable:
        fig.suptitle(variable)
    return _save(fig, path)


def plot_curves(curves: Sequence[CurveTable], path, names: Sequence[str] | None = None,
                data_x=None) -> str:
    """Overlay fitted functions with their pointwise bands; optional rug of the data."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for k, c in enumerate(curves):
        label = names[k] if names else f"{c.variable}: FP({c.label})"
        line, = ax.plot(c.x, c.fit, lw=1.6, label=label)
        ax.fill_between(c.x, c.lo, c.hi, color=line.get_color(), alpha=0.18, lw=0)
    if data_x is not None:
        lo = min(float(np.min(c.lo)) for c in curves) if curves else 0.0
        ax.plot(np.asarray(data_x), np.full(len(data_x), lo), "|", color="0.4", ms=6)
    ax.set_xlabel(curves[0].variable if curves else "x")
    ax.set_ylabel("partial predictor")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_smoothed(sm: SmoothedResiduals, path, residuals=None, x=None, variable: str = "") -> str:
    fig, ax = plt.subplots(figsize=(6, 4.2))
    if residuals is not None and x is not None:
        ax.scatter(x, residuals, s=6, color="0.7")
    ax.plot(sm.x, sm.smooth, color="C0", lw=1.6)
    ax.fill_between(sm.x, sm.lo, sm.hi, color="C0", alpha=0.2, lw=0)
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_xlabel(variable or "x")
    ax.set_ylabel("residual")
    ax.set_title(f"running mean, k={sm.k}")
    return _save(fig, path)
