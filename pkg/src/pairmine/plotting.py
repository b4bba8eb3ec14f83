"""Matplotlib figures for dataset statistics.

Always renders off-screen (Agg); every function writes one file and closes
its figure.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def figsize(width=5.0):
    return (width, width * GOLDEN)


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps PNG bytes reproducible
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_source_distribution(stats, path):
    """Horizontal bar chart of each source's share of the pairs."""
    with plt.rc_context(RC):
        names = list(stats.per_source)
        fig, ax = plt.subplots(figsize=figsize(5.0 if len(names) < 12 else 7.0))
        if names:
            y = np.arange(len(names))
            ax.barh(y, [stats.percent[n] for n in names], color="#4c72b0")
            ax.set_yticks(y)
            ax.set_yticklabels(names)
            ax.invert_yaxis()
        ax.set_xlabel("share of pairs (%)")
        ax.set_title(f"Distribution of data sources (n={stats.total})")
        return _save(fig, path)


def plot_overlap_histogram(stats, path, band=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        edges = np.asarray(stats.overlap_edges)
        ax.bar(edges[:-1], stats.overlap_hist, width=np.diff(edges), align="edge",
               color="#55a868", edgecolor="white")
        if band is not None:
            for v in band:
                ax.axvline(v, color="0.3", ls="--", lw=0.8)
        ax.set_xlim(0, 1)
        ax.set_xlabel("overlap")
        ax.set_ylabel("pairs")
        return _save(fig, path)


def plot_correspondence_histogram(stats, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        if stats.corr_edges:
            edges = np.asarray(stats.corr_edges)
            ax.bar(edges[:-1], stats.corr_hist, width=np.diff(edges), align="edge",
                   color="#c44e52", edgecolor="white")
        ax.set_xlabel("corresponding patches per pair")
        ax.set_ylabel("pairs")
        return _save(fig, path)


def write_stats_figures(stats, out_dir, band=None):
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        plot_source_distribution(stats, out / "sources.png"),
        plot_overlap_histogram(stats, out / "overlap_hist.png", band),
        plot_correspondence_histogram(stats, out / "correspondence_hist.png"),
    ]
