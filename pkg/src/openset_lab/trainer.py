"""Training loops: semi-supervised with periodic selection, and a
labeled-only baseline.

Each epoch optionally refreshes the kept unlabeled subset (every
`e_s`-th epoch, starting at epoch 0, so a stale subset persists in
between), then runs a fixed number of SGD iterations.  Every iteration
samples a labeled batch and an unlabeled batch with replacement,
takes one Nesterov-momentum step on the summed loss, and the epoch
ends with an evaluation snapshot appended to the metrics log.  All
randomness derives from the config seed, so (config, data) fully
determine the log.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import AugmentConfig, derive_seed, seeded_rng
from .errors import ConfigError
from .losses import LossWeights, supervised_objective, ce_objective, unsup_objective
from .metrics import auroc, ood_scores, pseudo_accuracy, selection_quality, top1_accuracy
from .selection import run_selection

log = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "epoch", "lr", "loss_s", "loss_u", "selected_count", "id_acc", "auroc",
    "pseudo_acc", "sel_precision", "sel_recall",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    iters_per_epoch: int
    batch_l: int
    batch_u: int
    lr0: float = 0.03
    momentum: float = 0.9
    selection: str = "none"  # "none", "gv", or "loss"
    threshold: object = None  # ThresholdPolicy, required unless selection none
    e_s: int = 1
    weights: LossWeights = LossWeights()
    rho_conf: float = 0.95
    seed: int = 0
    hidden_sizes: tuple = (32,)
    aug: AugmentConfig = AugmentConfig()
    pseudo_rule: str = "argmax"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.iters_per_epoch < 1 or self.batch_l < 1 or self.batch_u < 1:
            raise ConfigError("iteration and batch sizes must be >= 1")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.selection not in ("none", "gv", "loss"):
            raise ConfigError(f"unknown selection mode {self.selection!r}")
        if self.selection != "none" and self.threshold is None:
            raise ConfigError("active selection needs a threshold policy")
        if self.e_s < 1:
            raise ConfigError("e_s must be >= 1")
        if not 0.0 < self.rho_conf < 1.0:
            raise ConfigError("rho_conf must be in (0, 1)")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")
        if self.pseudo_rule not in ("argmax", "argmin"):
            raise ConfigError("pseudo_rule must be argmax or argmin")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_s: float
    loss_u: float
    selected_count: int
    id_acc: float
    auroc: float
    pseudo_acc: float
    sel_precision: float
    sel_recall: float


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRICS_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [r.epoch, repr(r.lr), repr(r.loss_s), repr(r.loss_u),
                     r.selected_count, repr(r.id_acc), repr(r.auroc),
                     repr(r.pseudo_acc), repr(r.sel_precision),
                     repr(r.sel_recall)]
                )


@dataclass
class TrainResult:
    params: nn.ModelParams
    log: MetricsLog
    selections: list


def _epoch_eval(params, data, rho_conf):
    seen_mask = data.t_y < data.k_seen
    if seen_mask.any():
        id_acc = top1_accuracy(params, data.t_x[seen_mask], data.t_y[seen_mask])
    else:
        id_acc = float("nan")
    if seen_mask.any() and (~seen_mask).any():
        scores = ood_scores(params, data.t_x)
        roc = auroc(scores[seen_mask], scores[~seen_mask])
    else:
        roc = float("nan")
    if len(data.u_x):
        pseudo = pseudo_accuracy(params, data.u_x, data.u_truth, data.k_seen)
    else:
        pseudo = float("nan")
    return id_acc, roc, pseudo


def train(cfg, data, threads=1):
    """Semi-supervised training; returns final params, log, selection events."""
    if cfg.selection != "none" and len(data.u_x) == 0:
        raise ConfigError("active selection requires a nonempty unlabeled pool")
    params = nn.init_mlp(
        [data.dim, *cfg.hidden_sizes], data.k_seen, seed=derive_seed(cfg.seed, 1)
    )
    velocity = None
    batch_rng = seeded_rng(derive_seed(cfg.seed, 2))
    metrics = MetricsLog()
    selections = []
    current = None
    n_u = len(data.u_x)
    for epoch in range(cfg.epochs):
        lr = nn.cosine_lr(epoch, cfg.epochs, cfg.lr0)
        if cfg.selection != "none" and epoch % cfg.e_s == 0:
            current = run_selection(
                params, data, cfg.selection, cfg.threshold, cfg.weights,
                cfg.rho_conf, epoch=epoch, seed=cfg.seed, aug=cfg.aug,
                rule=cfg.pseudo_rule, threads=threads,
            )
            selections.append(current)
        if cfg.selection == "none":
            pool = np.arange(n_u)
        else:
            pool = np.nonzero(current.selected)[0]
        if len(pool) == 0 and n_u > 0:
            log.warning("epoch %d: empty kept subset, unsupervised term skipped",
                        epoch)
        sum_s, sum_u = 0.0, 0.0
        for it in range(cfg.iters_per_epoch):
            bl = batch_rng.integers(0, len(data.s_x), cfg.batch_l)
            sup_obj = supervised_objective(data.s_x[bl], data.s_y[bl])
            if len(pool):
                bu = pool[batch_rng.integers(0, len(pool), cfg.batch_u)]
                seeds = [derive_seed(cfg.seed, 3, epoch, it, j)
                         for j in range(cfg.batch_u)]
                uns_obj = unsup_objective(
                    data.u_x[bu], seeds, cfg.weights, cfg.rho_conf, cfg.aug,
                    cfg.pseudo_rule,
                )
            else:
                uns_obj = None
            parts = {}

            def total(net):
                s = sup_obj(net)
                parts["s"] = float(s.data)
                if uns_obj is None:
                    parts["u"] = 0.0
                    return s
                u = uns_obj(net)
                parts["u"] = float(u.data)
                return s + u

            g = nn.grad(params, total)
            params, velocity = nn.sgd_step(params, g, lr, cfg.momentum, velocity)
            sum_s += parts["s"]
            sum_u += parts["u"]
        if cfg.selection == "none":
            if n_u:
                precision, recall = selection_quality(
                    np.ones(n_u, dtype=bool), ~data.u_planted
                )
            else:
                precision, recall = float("nan"), float("nan")
            kept = n_u
        else:
            precision, recall = selection_quality(current.selected,
                                                  ~data.u_planted)
            kept = current.selected_count
        id_acc, roc, pseudo = _epoch_eval(params, data, cfg.rho_conf)
        metrics.records.append(EpochRecord(
            epoch=epoch,
            lr=lr,
            loss_s=sum_s / cfg.iters_per_epoch,
            loss_u=sum_u / cfg.iters_per_epoch,
            selected_count=kept,
            id_acc=id_acc,
            auroc=roc,
            pseudo_acc=pseudo,
            sel_precision=precision,
            sel_recall=recall,
        ))
    return TrainResult(params=params, log=metrics, selections=selections)


def baseline_labeled_only(cfg, data):
    """Cross-entropy training on the labeled set alone, same loop shape."""
    params = nn.init_mlp(
        [data.dim, *cfg.hidden_sizes], data.k_seen, seed=derive_seed(cfg.seed, 1)
    )
    velocity = None
    batch_rng = seeded_rng(derive_seed(cfg.seed, 2))
    metrics = MetricsLog()
    for epoch in range(cfg.epochs):
        lr = nn.cosine_lr(epoch, cfg.epochs, cfg.lr0)
        sum_s = 0.0
        for _ in range(cfg.iters_per_epoch):
            bl = batch_rng.integers(0, len(data.s_x), cfg.batch_l)
            obj = ce_objective(data.s_x[bl], data.s_y[bl])
            value_box = {}

            def total(net):
                out = obj(net)
                value_box["s"] = float(out.data)
                return out

            g = nn.grad(params, total)
            params, velocity = nn.sgd_step(params, g, lr, cfg.momentum, velocity)
            sum_s += value_box["s"]
        id_acc, roc, pseudo = _epoch_eval(params, data, cfg.rho_conf)
        metrics.records.append(EpochRecord(
            epoch=epoch,
            lr=lr,
            loss_s=sum_s / cfg.iters_per_epoch,
            loss_u=0.0,
            selected_count=0,
            id_acc=id_acc,
            auroc=roc,
            pseudo_acc=pseudo,
            sel_precision=float("nan"),
            sel_recall=float("nan"),
        ))
    return TrainResult(params=params, log=metrics, selections=[])
