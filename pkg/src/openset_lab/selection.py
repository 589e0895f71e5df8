"""Open-set data selection: score unlabeled instances, cut, keep the low side.

Two scoring mechanisms.  Gradient-variance scoring measures, per
unlabeled instance, the squared distance between its unsupervised
gradient and the mean supervised gradient of the full labeled set.
Loss scoring uses the instance's unsupervised loss directly.  A
threshold (fixed top-k discard count, or an adaptive Otsu cut on the
score distribution) keeps instances with score strictly below rho;
rho = +inf is the select-all sentinel.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import AugmentConfig, derive_seed
from .errors import ConfigError
from .losses import (
    LossWeights,
    supervised_objective,
    unsup_loss_instance,
    unsup_objective,
)


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str  # "topk" or "otsu"
    k: int = 0  # discard count, used by "topk" only

    def __post_init__(self):
        if self.kind not in ("topk", "otsu"):
            raise ConfigError(f"unknown threshold kind {self.kind!r}")
        if self.kind == "topk" and self.k < 1:
            raise ConfigError("topk policy needs a discard count k >= 1")


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    mechanism: str  # "gv" or "loss"
    epoch: int


@dataclass(frozen=True)
class SelectionResult:
    epoch: int
    mechanism: str
    rho: float
    scores: np.ndarray
    selected: np.ndarray  # bool mask, same length as scores

    @property
    def selected_count(self):
        return int(self.selected.sum())


def _map_in_order(fn, items, threads=1):
    # Results keyed to input order regardless of worker count, so any
    # thread count reproduces the single-thread output exactly.
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def mean_labeled_gradient(params, s_x, s_y):
    """Mean supervised gradient over the full labeled set.

    Accumulated instance by instance in index order (fixed reduction
    order); equal to the batched gradient by linearity of the mean.
    """
    s_x = np.atleast_2d(np.asarray(s_x, dtype=np.float64))
    s_y = np.asarray(s_y, dtype=np.int64).reshape(-1)
    if len(s_x) == 0:
        raise ValueError("labeled set is empty")
    total = np.zeros(params.n_params)
    for i in range(len(s_x)):
        total += nn.grad(
            params, supervised_objective(s_x[i : i + 1], s_y[i : i + 1])
        )
    return total / len(s_x)


def instance_unsup_gradient(params, x, aug_seed, weights=LossWeights(),
                            rho_conf=0.95, aug=AugmentConfig(), rule="argmax"):
    """Exact gradient of one instance's unsupervised loss, flat vector."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return nn.grad(
        params, unsup_objective(x, [aug_seed], weights, rho_conf, aug, rule)
    )


def gv_scores(params, u_x, s_x, s_y, weights=LossWeights(), rho_conf=0.95,
              epoch=0, seed=0, aug=AugmentConfig(), rule="argmax", threads=1):
    """Squared gradient-variance scores for every unlabeled instance.

    score_i = || g_i - g_bar ||^2 where g_i is the instance's
    unsupervised gradient and g_bar the mean labeled gradient.  View
    seeds derive from (seed, epoch, instance position) so a scoring
    pass is reproducible.
    """
    u_x = np.atleast_2d(np.asarray(u_x, dtype=np.float64))
    g_bar = mean_labeled_gradient(params, s_x, s_y)

    def score_one(i):
        g_i = instance_unsup_gradient(
            params, u_x[i], derive_seed(seed, epoch, i), weights, rho_conf,
            aug, rule,
        )
        d = g_i - g_bar
        return float(d @ d)

    scores = _map_in_order(score_one, range(len(u_x)), threads)
    return ScoreVector(np.asarray(scores), "gv", epoch)


def loss_scores(params, u_x, weights=LossWeights(), rho_conf=0.95, epoch=0,
                seed=0, aug=AugmentConfig(), rule="argmax", threads=1):
    """Per-instance unsupervised loss as the selection score."""
    u_x = np.atleast_2d(np.asarray(u_x, dtype=np.float64))

    def score_one(i):
        return unsup_loss_instance(
            params, u_x[i], derive_seed(seed, epoch, i), weights, rho_conf,
            aug, rule,
        )

    scores = _map_in_order(score_one, range(len(u_x)), threads)
    return ScoreVector(np.asarray(scores), "loss", epoch)


def topk_threshold(scores, k):
    """Threshold that discards the k largest scores.

    Returns the k-th largest score; selection keeps strictly smaller
    scores, so ties at the threshold are all discarded.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 1 <= k <= len(scores):
        raise ValueError(f"k must be in [1, {len(scores)}], got {k}")
    return float(np.sort(scores)[len(scores) - k])


def otsu_threshold(scores):
    """Adaptive cut maximizing between-class variance of the two sides.

    Candidate cuts are midpoints between consecutive distinct sorted
    scores; the maximizer of w_low * w_high * (mu_low - mu_high)^2 wins,
    first candidate (in increasing score order) on ties.  All-equal
    scores yield +inf, the select-all sentinel.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if len(scores) == 0:
        raise ValueError("cannot threshold an empty score vector")
    s = np.sort(scores)
    boundary = np.nonzero(s[:-1] < s[1:])[0]
    if len(boundary) == 0:
        return float("inf")
    n = len(s)
    prefix = np.cumsum(s)
    count_low = boundary + 1
    w_low = count_low / n
    w_high = 1.0 - w_low
    mu_low = prefix[boundary] / count_low
    mu_high = (prefix[-1] - prefix[boundary]) / (n - count_low)
    variance = w_low * w_high * (mu_low - mu_high) ** 2
    best = boundary[int(np.argmax(variance))]
    return float(0.5 * (s[best] + s[best + 1]))


def apply_selection(score_vector, rho):
    """Keep instances whose score is strictly below rho."""
    scores = score_vector.scores
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return SelectionResult(
        epoch=score_vector.epoch,
        mechanism=score_vector.mechanism,
        rho=float(rho),
        scores=scores,
        selected=scores < rho,
    )


def threshold_for(score_vector, policy):
    if policy.kind == "topk":
        return topk_threshold(score_vector.scores, policy.k)
    return otsu_threshold(score_vector.scores)


def run_selection(params, data, mechanism, policy, weights=LossWeights(),
                  rho_conf=0.95, epoch=0, seed=0, aug=AugmentConfig(),
                  rule="argmax", threads=1):
    """Score the unlabeled pool, choose a threshold, apply it."""
    if mechanism == "gv":
        sv = gv_scores(params, data.u_x, data.s_x, data.s_y, weights, rho_conf,
                       epoch, seed, aug, rule, threads)
    elif mechanism == "loss":
        sv = loss_scores(params, data.u_x, weights, rho_conf, epoch, seed, aug,
                         rule, threads)
    else:
        raise ConfigError(f"unknown selection mechanism {mechanism!r}")
    return apply_selection(sv, threshold_for(sv, policy))


def write_selection_csv(path, result, u_idx, u_truth, u_planted):
    """One row per unlabeled instance for a single selection event."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["epoch", "idx", "score", "selected", "hidden_truth",
             "planted_unfriendly"]
        )
        for i in range(len(result.scores)):
            writer.writerow(
                [result.epoch, int(u_idx[i]), repr(float(result.scores[i])),
                 int(result.selected[i]), int(u_truth[i]), int(u_planted[i])]
            )
