"""Figure output for simulated hybrid arcs (file rendering only, no interactive use)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .hybrid import HybridArc

__all__ = ["arc_columns", "write_panel_data", "plot_state_and_mode"]


def arc_columns(arc: HybridArc) -> dict[str, list[float]]:
    """Flatten an arc into ``t``, ``x1``, ``x2`` and ``q`` columns (scalar ``x1`` only)."""
    cols = {"t": [], "x1": [], "x2": [], "q": []}
    for t, _, q, x, _ in arc.rows():
        cols["t"].append(t)
        cols["x1"].append(x[0])
        cols["x2"].append(x[-1])
        cols["q"].append(q)
    return cols


def write_panel_data(arc: HybridArc, path) -> None:
    """Three two-column blocks (``t x1``, ``t x2``, ``t q``) separated by blank lines."""
    cols = arc_columns(arc)
    with open(path, "w") as fh:
        for i, key in enumerate(("x1", "x2", "q")):
            if i:
                fh.write("\n\n")
            fh.write(f"# t {key}\n")
            for t, v in zip(cols["t"], cols[key]):
                fh.write(f"{t:.17g} {v:.17g}\n")


def plot_state_and_mode(arcs: Mapping[str, HybridArc], path, t_max: float | None = None) -> Path:
    """Three stacked panels, ``x1``, ``x2`` and ``q`` against ``t``, one line per arc."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6.4, 6.0))
    for label, arc in arcs.items():
        cols = arc_columns(arc)
        axes[0].plot(cols["t"], cols["x1"], label=label)
        axes[1].plot(cols["t"], cols["x2"], label=label)
        axes[2].step(cols["t"], cols["q"], where="post", label=label)
    for ax, name in zip(axes, ("$x_1$", "$x_2$", "$q$")):
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[2].set_yticks([1, 2])
    axes[2].set_xlabel("$t$")
    if t_max is not None:
        axes[2].set_xlim(0.0, t_max)
    axes[0].legend(loc="best", fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
