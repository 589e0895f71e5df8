"""Figure rendering for run reports.

Every CLI report path drops PNG figures next to its delimited output:
a dataset preview for synthesis, learning and selection curves for
training, and gap-versus-budget fits plus trajectories for the theory
runs.  Figures carry fixed metadata so identical runs produce
identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": "openset-lab"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_dataset_preview(data, path):
    """Scatter of the first two feature axes, split by role."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    if len(data.u_x):
        clean = ~data.u_planted
        ax.scatter(data.u_x[clean, 0], data.u_x[clean, 1], s=8, c="0.75",
                   label="unlabeled")
        if data.u_planted.any():
            ax.scatter(data.u_x[data.u_planted, 0], data.u_x[data.u_planted, 1],
                       s=14, c="tab:red", marker="x", label="planted")
    if len(data.s_x):
        ax.scatter(data.s_x[:, 0], data.s_x[:, 1], s=22, c=data.s_y,
                   cmap="tab10", edgecolors="black", linewidths=0.4,
                   label="labeled")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    ax.set_title("dataset preview (first two axes)")
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)


def render_train_curves(records, path):
    """Accuracy/AUROC and loss curves over epochs."""
    epochs = [r.epoch for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    ax1.plot(epochs, [r.id_acc for r in records], label="id accuracy")
    ax1.plot(epochs, [r.auroc for r in records], label="auroc")
    ax1.plot(epochs, [r.pseudo_acc for r in records], label="pseudo accuracy")
    ax1.set_xlabel("epoch")
    ax1.set_ylim(0.0, 1.05)
    ax1.legend(fontsize=8)
    ax1.set_title("evaluation")
    ax2.plot(epochs, [r.loss_s for r in records], label="supervised loss")
    ax2.plot(epochs, [r.loss_u for r in records], label="unsupervised loss")
    ax2.set_xlabel("epoch")
    ax2.legend(fontsize=8)
    ax2.set_title("training loss")
    _finish(fig, path)


def render_selection_curves(records, path):
    """Kept-count and selection precision/recall over epochs."""
    epochs = [r.epoch for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    ax1.plot(epochs, [r.selected_count for r in records], color="tab:blue")
    ax1.set_xlabel("epoch")
    ax1.set_title("kept unlabeled instances")
    ax2.plot(epochs, [r.sel_precision for r in records], label="precision")
    ax2.plot(epochs, [r.sel_recall for r in records], label="recall")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0.0, 1.05)
    ax2.legend(fontsize=8)
    ax2.set_title("clean-instance selection quality")
    _finish(fig, path)


def render_selection_scores(result, planted, path):
    """Histogram of a selection event's scores, split by planted flag."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    scores = result.scores
    planted = np.asarray(planted, dtype=bool)
    finite_max = scores.max() if len(scores) else 1.0
    bins = np.linspace(0.0, max(finite_max, 1e-12), 40)
    ax.hist(scores[~planted], bins=bins, alpha=0.7, label="clean",
            color="tab:blue")
    if planted.any():
        ax.hist(scores[planted], bins=bins, alpha=0.7, label="planted",
                color="tab:red")
    if np.isfinite(result.rho):
        ax.axvline(result.rho, color="black", linestyle="--",
                   label=f"rho = {result.rho:.3g}")
    ax.set_xlabel(f"{result.mechanism} score")
    ax.set_ylabel("count")
    ax.set_title(f"selection scores, epoch {result.epoch}")
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_rate_fit(ns, gaps, slope, intercept, bounds, title, path):
    """Log-log gap-versus-budget plot with the fitted rate line."""
    ns = np.asarray(ns, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(ns, gaps, "o", label="measured final gap")
    ax.loglog(ns, np.exp(intercept) * ns**slope, "-",
              label=f"fit slope {slope:.3f}")
    if bounds is not None:
        ax.loglog(ns, bounds, "--", color="0.4", label="stated bound")
    ax.set_xlabel("sample budget")
    ax.set_ylabel("final expected gap")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_trajectories(named_runs, path):
    """Mean gap trajectories for a set of labeled runs, log scale."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for name, result in named_runs:
        ax.semilogy(result.mean_gap, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("mean gap")
    ax.set_title("optimization trajectories")
    ax.legend(fontsize=8)
    _finish(fig, path)
