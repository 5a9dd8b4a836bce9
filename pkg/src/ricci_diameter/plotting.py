"""SVG figures for scenario reports, written with a fixed layout and no timestamps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FORMATS = ("svg",)
STYLE = {
    "svg.hashsalt": "ricci-diameter",
    "svg.fonttype": "path",
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}


def _save(fig, path: Path, fmt: str) -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown figure format {fmt!r}; expected one of {FORMATS}")
    path = path.with_suffix("." + fmt)
    fig.savefig(path, format=fmt, metadata={"Date": None})
    plt.close(fig)
    return path


def plot_trajectory(diag: dict, path: Path, title: str = "", fmt: str = "svg") -> Path:
    """Diameter, volume and sup |R| against time."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(6.0, 7.0), sharex=True)
        t = diag["t"]
        axes[0].plot(t, diag["length"], color="C0")
        axes[0].set_ylabel("diameter")
        axes[1].plot(t, diag["volume"], color="C1")
        axes[1].set_ylabel("volume")
        axes[2].semilogy(t, np.maximum(diag["sup_R"], 1e-300), color="C3")
        axes[2].set_ylabel(r"$\|R\|_\infty$")
        axes[2].set_xlabel("t")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path, fmt)


def _margin_series(records) -> tuple[np.ndarray, np.ndarray]:
    """Smallest margin per time among records whose hypotheses hold."""
    by_t: dict[float, float] = {}
    for r in records:
        if r.hypothesis_met and np.isfinite(r.margin):
            by_t[r.t] = min(by_t.get(r.t, np.inf), r.margin)
    t = np.array(sorted(by_t))
    return t, np.array([by_t[x] for x in t])


def plot_margins(records: dict, path: Path, title: str = "", fmt: str = "svg") -> Path:
    """One panel per audit id: minimal margin (rhs - lhs) against time, symlog scale."""
    ids = [k for k in records if records[k]]
    with plt.rc_context(STYLE):
        ncol = 2
        nrow = max(1, (len(ids) + ncol - 1) // ncol)
        fig, axes = plt.subplots(nrow, ncol, figsize=(7.5, 2.2 * nrow), squeeze=False)
        for ax, key in zip(axes.ravel(), ids):
            t, m = _margin_series(records[key])
            if t.size:
                ax.plot(t, m, marker="." if t.size < 50 else None, color="C0")
            ax.axhline(0.0, color="k", lw=0.6)
            ax.set_yscale("symlog", linthresh=1e-6)
            ax.set_title(key, fontsize=9)
        for ax in axes.ravel()[len(ids):]:
            ax.set_visible(False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path, fmt)


def plot_heat_mass(records, path: Path, title: str = "", fmt: str = "svg") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        t = [r.t for r in records]
        ax.plot(t, [r.lhs for r in records], label="mass", color="C0")
        ax.plot(t, [r.rhs for r in records], label="bound", color="C3", ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\int G\,dg$")
        ax.legend()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path, fmt)


def render_figures(res, out: Path, fmt: str = "svg") -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    name = res.scenario.name
    paths = [plot_trajectory(res.trajectory.diagnostics, out / "trajectory", name, fmt)]
    if res.records:
        paths.append(plot_margins(res.records, out / "margins", name, fmt))
    if res.records.get("mass_bound"):
        paths.append(plot_heat_mass(res.records["mass_bound"], out / "heat_mass", name, fmt))
    return paths
