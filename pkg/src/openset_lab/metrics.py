"""Evaluation metrics: accuracy, open-set detection, selection quality.

Hidden truth and planted flags are consumed here and nowhere else in
the pipeline; training code never sees them.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import forward_batch


def top1_accuracy(params, x, y):
    """Fraction of instances whose class-head argmax matches the label."""
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if len(y) == 0:
        raise ValueError("empty evaluation set")
    p, _ = forward_batch(params, x)
    return float((p.argmax(axis=1) == y).mean())


def ood_scores(params, x, score_rule="ova_outlier"):
    """Open-set score per instance; larger means more likely unseen.

    "ova_outlier": the outlier probability of the predicted class's
    pair.  "neg_max_inlier": one minus the largest inlier probability
    over all pairs.
    """
    p, q = forward_batch(params, x)
    if score_rule == "ova_outlier":
        return q[np.arange(len(p)), p.argmax(axis=1), 1]
    if score_rule == "neg_max_inlier":
        return 1.0 - q[:, :, 0].max(axis=1)
    raise ConfigError(f"unknown ood score rule {score_rule!r}")


def _average_ranks(values):
    # Average ranks (1-based) with ties sharing the mean of their span.
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores_id, scores_ood):
    """P(ood score > id score) + 0.5 P(tie), by rank summation."""
    scores_id = np.asarray(scores_id, dtype=np.float64).ravel()
    scores_ood = np.asarray(scores_ood, dtype=np.float64).ravel()
    if len(scores_id) == 0 or len(scores_ood) == 0:
        raise ValueError("both score groups must be nonempty")
    combined = np.concatenate([scores_ood, scores_id])
    ranks = _average_ranks(combined)
    n_ood, n_id = len(scores_ood), len(scores_id)
    rank_sum = ranks[:n_ood].sum()
    return float((rank_sum - n_ood * (n_ood + 1) / 2.0) / (n_ood * n_id))


def unlabeled_confusion(params, u_x, u_truth, rho_conf, k_seen):
    """Pseudo-label confusion over the unlabeled pool.

    Rows: hidden truth classes (seen first, then each unseen class).
    Columns: predicted pseudo-label among the seen classes, plus a
    final abstain column for mask-rejected instances.
    """
    u_truth = np.asarray(u_truth, dtype=np.int64).reshape(-1)
    if len(u_truth) == 0:
        raise ValueError("empty unlabeled pool")
    if u_truth.min() < 0:
        raise ValueError("hidden truth labels must be >= 0")
    k_total = max(int(u_truth.max()) + 1, k_seen)
    p, q = forward_batch(params, u_x)
    y_hat = p.argmax(axis=1)
    confidence = p.max(axis=1)
    inlier = q[np.arange(len(y_hat)), y_hat, 0]
    mask = (inlier > 0.5) & (confidence > rho_conf)
    matrix = np.zeros((k_total, k_seen + 1), dtype=np.int64)
    for truth, pred, ok in zip(u_truth, y_hat, mask):
        matrix[truth, pred if ok else k_seen] += 1
    return matrix


def merge_unseen_rows(confusion, k_seen):
    """Collapse all unseen-class rows into one, giving (k_seen+1) x cols."""
    if confusion.shape[0] < k_seen:
        raise ShapeError("confusion has fewer rows than seen classes")
    top = confusion[:k_seen]
    rest = confusion[k_seen:].sum(axis=0, keepdims=True)
    if rest.size == 0:
        rest = np.zeros((1, confusion.shape[1]), dtype=confusion.dtype)
    return np.concatenate([top, rest])


def selection_quality(selected, clean):
    """Precision and recall of clean instances inside the kept subset.

    An empty selection has undefined precision; by convention it is
    reported as (1.0, 0.0) so the metrics stay total.  A pool with no
    clean instances reports recall 1.0 (nothing clean was missed).
    """
    selected = np.asarray(selected, dtype=bool).ravel()
    clean = np.asarray(clean, dtype=bool).ravel()
    if selected.shape != clean.shape:
        raise ShapeError("selected and clean masks must have equal length")
    n_selected = int(selected.sum())
    if n_selected == 0:
        return 1.0, 0.0
    kept_clean = int((selected & clean).sum())
    n_clean = int(clean.sum())
    precision = kept_clean / n_selected
    recall = kept_clean / n_clean if n_clean else 1.0
    return precision, recall


@dataclass
class EvalReport:
    id_accuracy: float
    auroc: float
    pseudo_accuracy: float
    selection_precision: float
    selection_recall: float
    confusion: np.ndarray  # (k_seen + 1) x (k_seen + 1), unseen rows merged

    def to_dict(self):
        return {
            "id_accuracy": self.id_accuracy,
            "auroc": self.auroc,
            "pseudo_accuracy": self.pseudo_accuracy,
            "selection_precision": self.selection_precision,
            "selection_recall": self.selection_recall,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confusion_to_csv(confusion, k_seen, path):
    """Write a confusion count grid with labeled rows and columns."""
    confusion = np.asarray(confusion)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        n_rows = confusion.shape[0]
        row_names = [f"true_{k}" for k in range(k_seen)]
        row_names += ["unseen"] if n_rows == k_seen + 1 else [
            f"unseen_{j}" for j in range(n_rows - k_seen)
        ]
        writer.writerow(["truth"] + [f"pred_{k}" for k in range(k_seen)]
                        + ["abstain"])
        for name, row in zip(row_names, confusion):
            writer.writerow([name] + [int(v) for v in row])


def pseudo_accuracy(params, u_x, u_truth, k_seen):
    """Accuracy of class-head predictions on unlabeled seen-class items."""
    u_truth = np.asarray(u_truth, dtype=np.int64).reshape(-1)
    seen = u_truth < k_seen
    if not seen.any():
        return float("nan")
    p, _ = forward_batch(params, np.atleast_2d(u_x)[seen])
    return float((p.argmax(axis=1) == u_truth[seen]).mean())


def evaluate(params, data, rho_conf, selection_result=None):
    """Full evaluation snapshot against a dataset's test and unlabeled splits."""
    seen_mask = data.t_y < data.k_seen
    id_acc = top1_accuracy(params, data.t_x[seen_mask], data.t_y[seen_mask])
    if (~seen_mask).any():
        scores = ood_scores(params, data.t_x)
        roc = auroc(scores[seen_mask], scores[~seen_mask])
    else:
        roc = float("nan")
    confusion = merge_unseen_rows(
        unlabeled_confusion(params, data.u_x, data.u_truth, rho_conf, data.k_seen),
        data.k_seen,
    )
    if selection_result is not None:
        precision, recall = selection_quality(
            selection_result.selected, ~data.u_planted
        )
    else:
        precision, recall = float("nan"), float("nan")
    return EvalReport(
        id_accuracy=id_acc,
        auroc=roc,
        pseudo_accuracy=pseudo_accuracy(params, data.u_x, data.u_truth, data.k_seen),
        selection_precision=precision,
        selection_recall=recall,
        confusion=confusion,
    )
