"""Multi-panel rendering of the five figure layouts.

Figures 1/2: per-noise-level columns with solution overlays on top and the
particle flow over a drift-magnitude background below.  Figure 3: Monte
Carlo mean with a one-standard-deviation band against the deterministic
mean field.  Figures 4/5: solution overlays only.

Rendering is a pure function of the CSV bundle: fixed style, fixed dpi,
no timestamps or environment-dependent content.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bundle import FigureBundle, read_columns, read_field, read_trajectories

DPI = 130


def _solution_key(figure_id: int) -> str:
    return "v_eps" if figure_id in (2, 5) else "u_eps"


def _stochastic_label(figure_id: int) -> str:
    return "composition sample" if figure_id in (2, 5) else "pushforward sample"


def _plot_solutions(ax, cols, key, label):
    ax.plot(cols["x"], cols[key], color="tab:blue", lw=1.2, label=label)
    ax.plot(cols["x"], cols["m_eps"], color="tab:green", ls="--", lw=1.4,
            label="mean field")
    ax.plot(cols["x"], cols["u_entropy"], color="black", ls=":", lw=1.2,
            label="entropy solution")
    ax.set_xlabel("x")
    ax.grid(alpha=0.25)


def _plot_flow(ax, bundle: FigureBundle, side: str):
    times, nodes, drift = read_field(bundle.path(f"drift_{side}"))
    ax.pcolormesh(nodes, times, drift, cmap="Greys", shading="auto",
                  rasterized=True)
    f_times, pos = read_trajectories(bundle.path(f"flow_{side}"))
    ax.plot(pos, f_times, color="tab:blue", lw=0.5, alpha=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_xlim(nodes[0], nodes[-1])
    ax.set_ylim(f_times[0], f_times[-1])


def build_figure(bundle: FigureBundle, figure_id: int):
    """Compose the matplotlib figure; returns (figure, named artists).

    The artists map exposes the band polygons of the mean/std layout so
    callers can verify the drawn geometry against the CSV columns.
    """
    bundle.validate(figure_id)
    artists: dict[str, object] = {}
    key = _solution_key(figure_id)

    if figure_id in (1, 2):
        fig, axes = plt.subplots(2, 2, figsize=(10.0, 7.0), dpi=DPI)
        for col, side in enumerate(("left", "right")):
            cols = read_columns(bundle.path(f"solution_{side}"))
            eps = bundle.metadata.get(f"epsilon_{side}", "")
            _plot_solutions(axes[0, col], cols, key, _stochastic_label(figure_id))
            axes[0, col].set_title(f"noise amplitude {eps}")
            _plot_flow(axes[1, col], bundle, side)
        axes[0, 0].legend(loc="upper right", fontsize=8)
    elif figure_id == 3:
        fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0), dpi=DPI)
        for col, case in enumerate(("compressive", "expansive")):
            ax = axes[col]
            stats = read_columns(bundle.path(f"stats_{case}"))
            lo = stats["mc_mean"] - stats["mc_std"]
            hi = stats["mc_mean"] + stats["mc_std"]
            band = ax.fill_between(stats["x"], lo, hi, color="tab:blue",
                                   alpha=0.3, linewidth=0)
            artists[f"band_{case}"] = band
            samples = read_columns(bundle.path(f"samples_{case}"))
            for name, vals in samples.items():
                if name != "x":
                    ax.plot(samples["x"], vals, color="gray", lw=0.5, alpha=0.4)
            ax.plot(stats["x"], stats["m_eps"], color="tab:green", ls="--",
                    lw=1.5, label="mean field")
            ax.plot(stats["x"], stats["mc_mean"], color="tab:red", lw=1.2,
                    label="sample mean")
            ax.set_title(case)
            ax.set_xlabel("x")
            ax.grid(alpha=0.25)
        axes[0].legend(loc="upper right", fontsize=8)
    elif figure_id in (4, 5):
        fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0), dpi=DPI)
        for col, side in enumerate(("left", "right")):
            cols = read_columns(bundle.path(f"solution_{side}"))
            eps = bundle.metadata.get(f"epsilon_{side}", "")
            _plot_solutions(axes[col], cols, key, _stochastic_label(figure_id))
            axes[col].set_title(f"noise amplitude {eps}")
        axes[0].legend(loc="upper right", fontsize=8)
    else:
        raise ValueError(f"unknown figure id {figure_id}")

    fig.tight_layout()
    return fig, artists


def render(bundle: FigureBundle, figure_id: int, out) -> Path:
    """Render one figure to a raster image file."""
    fig, _ = build_figure(bundle, figure_id)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=DPI)
    plt.close(fig)
    return out
