"""Matplotlib rendering of region grids and study result curves.

The CSV emitted by the CLI stays the primary artifact; these renderers are
the optional report path that turns the same data into figure files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.colors import BoundaryNorm, ListedColormap

from .sim import RegionGrid

__all__ = ["render_region_figure", "render_study_figure"]

_REGION_COLORS = ListedColormap(["#f4f4f4", "#7fb8da", "#1f5fa6"])
_REGION_NORM = BoundaryNorm([-0.5, 0.5, 1.5, 2.5], _REGION_COLORS.N)


def render_region_figure(grid: RegionGrid, path, title: str | None = None) -> None:
    """Render a two-hypothesis discovery-count grid as a heat map."""
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    im = ax.imshow(
        grid.counts.T,
        origin="lower",
        extent=(0.0, 1.0, 0.0, 1.0),
        cmap=_REGION_COLORS,
        norm=_REGION_NORM,
        interpolation="nearest",
        aspect="equal",
    )
    cbar = fig.colorbar(im, ax=ax, ticks=[0, 1, 2])
    cbar.set_label("discoveries")
    ax.set_xlabel("$p_1$")
    ax.set_ylabel("$p_2$")
    ax.set_title(title or f"{grid.procedure}, alpha={grid.alpha:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_study_figure(rows, path, alpha: float | None = None) -> None:
    """Render power and FDR versus effect size, faceted by (n, K1).

    ``rows`` are the result dicts produced by run_grid.  Power panels sit on
    the left block, FDR panels (with the nominal level line) on the right.
    """
    n_values = sorted({r["n"] for r in rows})
    k1_values = sorted({r["K1"] for r in rows})
    procedures = list(dict.fromkeys(r["procedure"] for r in rows))
    nrows = max(len(n_values), 1)
    ncols = 2 * max(len(k1_values), 1)
    fig, axes = plt.subplots(
        nrows,
        ncols,
        figsize=(2.9 * ncols, 2.5 * nrows),
        squeeze=False,
        sharex=True,
    )
    for i, n in enumerate(n_values):
        for j, k1 in enumerate(k1_values):
            facet = [r for r in rows if r["n"] == n and r["K1"] == k1]
            for metric, col in (("power", j), ("fdr", len(k1_values) + j)):
                ax = axes[i][col]
                for proc in procedures:
                    pts = sorted(
                        (r["xi"], r[metric]) for r in facet if r["procedure"] == proc
                    )
                    if pts:
                        xs, ys = zip(*pts)
                        ax.plot(xs, ys, marker="o", markersize=3, label=proc)
                if metric == "fdr" and alpha is not None:
                    ax.axhline(alpha, color="black", linestyle=":", linewidth=1)
                ax.set_title(f"{metric}, n={n}, K1={k1}", fontsize=9)
                ax.set_ylim(-0.02, 1.02)
                if i == nrows - 1:
                    ax.set_xlabel(r"effect size $\xi$")
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=min(len(labels), 4),
                   fontsize=8, frameon=False)
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path, dpi=150)
    plt.close(fig)
