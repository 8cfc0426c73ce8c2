"""Matplotlib rendering for reports. Imported lazily; the engines never need it."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_writer  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.6,
    "legend.frameon": False,
    "font.size": 10,
    # Fixed metadata keeps SVG/PDF output reproducible.
    "svg.hashsalt": "dephased-bath",
}

ENGINE_STYLE = {
    "exact": dict(color="tab:red", ls="-"),
    "markovian": dict(color="k", ls="--"),
    "reduced": dict(color="tab:cyan", ls="--"),
    "coupled": dict(color="tab:purple", ls=":"),
    "trajectories": dict(color="tab:green", ls="-."),
}


def _save(fig, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".") or "png"
    with atomic_writer(path, "wb") as fh:
        fig.savefig(fh, format=fmt, dpi=150, bbox_inches="tight", metadata=_metadata(fmt))
    plt.close(fig)
    return path


def _metadata(fmt: str):
    if fmt == "png":
        return {"Software": None}
    if fmt in ("svg", "pdf"):
        return {"Date": None}
    return None


def line_plot(path, t, curves: dict, xlabel: str = "t", ylabel: str = "", title: str = "",
              styles: dict | None = None, logx: bool = False) -> Path:
    """One axes, one line per ``label -> values`` entry."""
    styles = styles or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in curves.items():
            ax.plot(t, y, label=label, **styles.get(label, {}))
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend()
        return _save(fig, path)


def plot_engines(series: dict, path) -> Path:
    """System polarization from every engine of a simulate run."""
    t = next(iter(series.values())).times
    return line_plot(path, t, {k: s.z_s for k, s in series.items()}, ylabel="z_s",
                     styles=ENGINE_STYLE)


def plot_csv(csv_path, out_path, columns=None, logx: bool = False) -> Path:
    """Plot columns of any CSV whose first column is time."""
    from .lindblad import read_series_csv

    data = read_series_csv(csv_path)
    names = list(data)
    tcol = names[0]
    cols = columns or [c for c in names[1:] if np.any(np.isfinite(data[c]))]
    missing = [c for c in cols if c not in data]
    if missing:
        raise KeyError(f"columns not in {csv_path}: {missing}")
    return line_plot(out_path, data[tcol], {c: data[c] for c in cols}, xlabel=tcol,
                     title=Path(csv_path).stem, logx=logx)
