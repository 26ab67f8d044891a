"""Figures for sweep reports.

Rendered with the Agg canvas directly so nothing touches pyplot's global
state; safe to call from worker processes and headless test runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    False: dict(color="#1f77b4", marker="o", label="periodic"),
    True: dict(color="#d62728", marker="s", label="periodic + event trigger"),
}


def _new_figure(width=5.5, height=3.6):
    fig = Figure(figsize=(width, height), dpi=120)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    return path


def _curve(rows, trigger: bool):
    # the 1/1 row belongs to both curves: with every frame processed the trigger is moot
    picked = [r for r in rows if r.trigger == trigger or r.n == r.m]
    return sorted(picked, key=lambda r: r.report.eff_target)


def plot_tradeoff(rows: Sequence, path, title: str = "") -> Path:
    """HOTA against modeled draw (or effective target when no profile was used)."""
    use_draw = all(r.report.sys_draw_w is not None for r in rows)
    xkey = "sys_draw_w" if use_draw else "eff_target"
    fig, ax = _new_figure()
    for trigger in (False, True):
        curve = _curve(rows, trigger)
        if len(curve) < 2 and trigger:
            continue
        x = [getattr(r.report, xkey) for r in curve]
        y = [r.report.hota for r in curve]
        ax.plot(x, y, **STYLE[trigger])
        for r, xi, yi in zip(curve, x, y):
            if r.n != r.m:
                ax.annotate(f"{r.n}/{r.m}", (xi, yi), textcoords="offset points", xytext=(4, -10), fontsize=7,
                            color=STYLE[trigger]["color"])
    ax.set_xlabel("modeled system draw [W]" if use_draw else "effective processing target")
    ax.set_ylabel("HOTA [%]")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)


def plot_yield(rows: Sequence, path, title: str = "") -> Path:
    """Grouped bars of yield per baseline target, periodic vs triggered."""
    targets = sorted({(r.n, r.m) for r in rows if r.n != r.m}, key=lambda t: -t[0] / t[1])
    fig, ax = _new_figure()
    x = np.arange(len(targets))
    width = 0.38
    for k, trigger in enumerate((False, True)):
        by_target = {(r.n, r.m): r.report.yield_w_per_hota for r in rows if r.trigger == trigger}
        if not any(by_target.get(t) is not None for t in targets):
            continue
        values = [by_target.get(t) for t in targets]
        heights = [np.nan if v is None else v for v in values]
        ax.bar(x + (k - 0.5) * width, heights, width, color=STYLE[trigger]["color"], label=STYLE[trigger]["label"])
    ax.set_xticks(x)
    ax.set_xticklabels([f"{n}/{m}" for n, m in targets])
    ax.set_xlabel("baseline processing target")
    ax.set_ylabel("yield [W per HOTA point]")
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)
