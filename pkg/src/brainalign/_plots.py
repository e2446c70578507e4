"""SVG line plots for sweep reports.

SVG output is kept byte-deterministic: no creation date, fixed hash salt.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "brainalign"

import matplotlib.pyplot as plt  # noqa: E402


def layer_context_plot(curves: dict, path: Path, ylabel: str) -> None:
    """One line per layer across context lengths."""
    layers = sorted({layer for layer, _ in curves})
    fig, ax = plt.subplots(figsize=(6, 4))
    for layer in layers:
        contexts = sorted(ctx for l, ctx in curves if l == layer)
        ax.plot(contexts, [curves[(layer, c)] for c in contexts],
                marker="o", markersize=3, label=f"layer {layer}")
    ax.set_xlabel("context length (words)")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
