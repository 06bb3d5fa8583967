"""PNG figures for the CLI reports (headless Agg backend)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.frameon": False,
    # fixed metadata keeps repeated runs comparable
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def trajectory_figure(path, t, x, drift, title: str) -> Path:
    """Particle paths in the complex x-plane and the conserved-quantity drift."""
    t = np.asarray(t)
    x = np.asarray(x)
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.0))
        for i in range(x.shape[1]):
            ax1.plot(x[:, i].real, x[:, i].imag, lw=1.2, label=f"x{i + 1}")
            ax1.plot(x[0, i].real, x[0, i].imag, "o", ms=3, color=ax1.lines[-1].get_color())
        ax1.set_xlabel("Re x")
        ax1.set_ylabel("Im x")
        ax1.legend(fontsize=7)
        d = np.asarray(drift)
        for k in range(d.shape[1]):
            ax2.semilogy(t[1:], np.maximum(d[1:, k], 1e-18), lw=1, label=f"H{k + 1}")
        ax2.set_xlabel("t")
        ax2.set_ylabel("relative drift")
        ax2.legend(fontsize=7, ncol=2)
        fig.suptitle(title)
        return _save(fig, path)


def defects_figure(path, labels, defects, tolerances) -> Path:
    """log10(defect / tolerance) per report row; bars right of zero fail."""
    defects = np.asarray(defects, dtype=float)
    tolerances = np.asarray(tolerances, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(tolerances > 0, defects / tolerances, np.where(defects > 0, np.inf, 0.0))
        score = np.log10(np.clip(ratio, 1e-16, 1e6))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 0.22 * len(labels) + 1.2))
        y = np.arange(len(labels))
        colors = ["tab:red" if s > 0 else "tab:blue" for s in score]
        ax.barh(y, score + 16, left=-16, color=colors)
        ax.axvline(0, color="k", lw=0.8)
        ax.set_yticks(y, labels, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("log10(defect / tolerance)")
        return _save(fig, path)


def deviation_figure(path, series: dict) -> Path:
    """Oracle deviation against time, one line per flow."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (t, dev) in series.items():
            ax.semilogy(t, np.maximum(dev, 1e-18), "o-", ms=3, lw=1, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("max |x_flow - x_det|")
        ax.legend()
        return _save(fig, path)


def expansion_figure(path, mu_abs, defects: dict) -> Path:
    """Truncation error of the large-mu series on log-log axes."""
    mu_abs = np.asarray(mu_abs, dtype=float)
    order = np.argsort(mu_abs)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, d in defects.items():
            d = np.asarray(d, dtype=float)[order]
            ok = np.isfinite(d) & (d > 0)
            ax.loglog(mu_abs[order][ok], d[ok], "o-", ms=3, lw=1, label=f"K = {k}")
        ax.set_xlabel("|mu|")
        ax.set_ylabel("max |y - series|")
        ax.legend()
        return _save(fig, path)
