"""SVG figures for experiment outputs.

Mean +/- 1 std bands over seeds (parameter error, model-error log det, trust
radius), plus the estimate trajectory with posterior ellipses and the chosen
inputs for a single seed.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "sysid",  # stable element ids across runs
}

LABELS = {
    "linf_error": r"$\|\hat\theta - \theta_{true}\|_\infty$",
    "logdet_model_err": r"$\log\det\Sigma_{model\ error}$",
    "delta": r"trust radius $\delta$",
    "accepted": "accepted passes",
}


def figsize(scale=1.0):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    width = 4.5 * scale
    return (width, width * golden)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def band_plot(summary, metric, path, log_y=False, title=None):
    """Mean across seeds with a shaded +/- 1 std band."""
    it = np.array([row["iter"] for row in summary])
    mean = np.array([row[f"{metric}_mean"] for row in summary])
    std = np.array([row[f"{metric}_std"] for row in summary])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        lo, hi = mean - std, mean + std
        if log_y:
            floor = np.nanmin(mean[mean > 0]) * 1e-2 if np.any(mean > 0) else 1e-16
            lo = np.maximum(lo, floor)
            ax.set_yscale("log")
        ax.plot(it, mean, color="C0", lw=1.5, label="mean")
        ax.fill_between(it, lo, hi, color="C0", alpha=0.25, lw=0, label=r"$\pm 1$ std")
        ax.set_xlabel("iteration")
        ax.set_ylabel(LABELS.get(metric, metric))
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def _seed_rows(records, seed):
    return [r for r in records if r.seed == seed and r.status == "ok"]


def trajectory_plot(records, seed, path, theta_true=None, n_std=2.0):
    """First two parameter coordinates over time with posterior covariance ellipses."""
    rows = _seed_rows(records, seed)
    if not rows or len(rows[0].theta) < 2:
        return False
    th = np.array([r.theta[:2] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for r, (a, b) in zip(rows, th):
            c00, c01, c11 = r.post_cov
            cov = np.array([[c00, c01], [c01, c11]])
            if not np.all(np.isfinite(cov)):
                continue
            vals, vecs = np.linalg.eigh(cov)
            vals = np.maximum(vals, 0.0)
            angle = math.degrees(math.atan2(vecs[1, 1], vecs[0, 1]))
            ax.add_patch(Ellipse((a, b), 2 * n_std * math.sqrt(vals[1]), 2 * n_std * math.sqrt(vals[0]),
                                 angle=angle, fill=False, color="C0", alpha=0.5, lw=0.8))
        ax.plot(th[:, 0], th[:, 1], "-o", color="C3", ms=2.5, lw=1.0, label="estimate")
        if theta_true is not None:
            ax.plot(theta_true[0], theta_true[1], "k*", ms=8, label="true")
        ax.set_xlabel(r"$\hat\theta_1$")
        ax.set_ylabel(r"$\hat\theta_2$")
        ax.legend(loc="best")
        _save(fig, path)
    return True


def inputs_plot(records, seed, path):
    rows = _seed_rows(records, seed)
    if not rows:
        return False
    it = [r.iter for r in rows]
    u = np.array([r.inputs for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for j in range(u.shape[1]):
            ax.plot(it, u[:, j], "-o", ms=2.5, lw=1.0, label=f"input {j}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("designed input")
        ax.legend(loc="best")
        _save(fig, path)
    return True


def render_all(records, summary, out_dir, case_name="", theta_true=None, seed=0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if any(np.isfinite(row["linf_error_mean"]) for row in summary):
        band_plot(summary, "linf_error", out / "error.svg", log_y=True, title=case_name)
        written.append(out / "error.svg")
    band_plot(summary, "logdet_model_err", out / "logdet.svg", title=case_name)
    written.append(out / "logdet.svg")
    band_plot(summary, "delta", out / "delta.svg", title=case_name)
    written.append(out / "delta.svg")
    if trajectory_plot(records, seed, out / "trajectory.svg", theta_true=theta_true):
        written.append(out / "trajectory.svg")
    if inputs_plot(records, seed, out / "inputs.svg"):
        written.append(out / "inputs.svg")
    return written
