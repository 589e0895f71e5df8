"""Loss family for open-set semi-supervised training.

Supervised side: cross-entropy on the class head plus a one-vs-all
term on the pair head.  Unsupervised side, per unlabeled instance:
an entropy term over both weak views' pair probabilities, a soft
consistency term between the two weak views, and a confidence-masked
pseudo-label cross-entropy on a strong view.  Batch losses are means
of per-instance values.  Probabilities are clamped to [1e-12, 1]
before every log.

Each loss has an objective builder (a closure over the batch mapping a
TensorNet to a scalar Tensor) so the same definition serves value
computation, exact gradients, and finite-difference checks.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import softmax
from .data import AugmentConfig, unsup_views
from .errors import ConfigError, ShapeError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0  # entropy term
    lambda2: float = 1.0  # consistency term
    lambda3: float = 1.0  # masked pseudo-label term

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be >= 0")


@dataclass(frozen=True)
class PseudoLabelDecision:
    y_hat: int
    confidence: float
    ova_inlier: float
    mask: bool


def _check_batch(x, y=None, k=None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if y is not None:
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if k is not None and (y.min() < 0 or y.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        return x, y
    return x


def _clamped_log(t):
    return t.clip(PROB_FLOOR, 1.0).log()


def _stable_softmax(a):
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# -- supervised -----------------------------------------------------------


def ce_objective(x, y):
    """Mean cross-entropy of true labels under the class head."""
    n = len(y)
    rows = np.arange(n)

    def obj(net):
        z, _ = net.heads(x)
        logp = _clamped_log(softmax(z, axis=-1))
        return -logp[rows, y].mean()

    return obj

def ova_objective(x, y):
    """Mean one-vs-all term: true-class inlier log-prob plus the worst
    (smallest) outlier log-prob among the other classes."""
    n = len(y)
    rows = np.arange(n)

    def obj(net):
        _, o = net.heads(x)
        logq = _clamped_log(softmax(o, axis=-1))
        inlier = logq[rows, y, 0]
        outlier = logq[:, :, 1]
        blocked = outlier.data.copy()
        blocked[rows, y] = np.inf
        hardest = outlier[rows, blocked.argmin(axis=1)]
        return -(inlier + hardest).mean()

    return obj


def supervised_objective(x, y):
    """Cross-entropy plus one-vs-all on a labeled batch, sharing one forward."""
    n = len(y)
    rows = np.arange(n)

    def obj(net):
        z, o = net.heads(x)
        logp = _clamped_log(softmax(z, axis=-1))
        logq = _clamped_log(softmax(o, axis=-1))
        ce = -logp[rows, y].mean()
        inlier = logq[rows, y, 0]
        outlier = logq[:, :, 1]
        blocked = outlier.data.copy()
        blocked[rows, y] = np.inf
        hardest = outlier[rows, blocked.argmin(axis=1)]
        return ce - (inlier + hardest).mean()

    return obj


def ce_loss(params, x, y):
    x, y = _check_batch(x, y, params.k_classes)
    return nn.objective_value(params, ce_objective(x, y))


def ova_loss(params, x, y):
    x, y = _check_batch(x, y, params.k_classes)
    return nn.objective_value(params, ova_objective(x, y))


def supervised_loss(params, x, y):
    x, y = _check_batch(x, y, params.k_classes)
    return nn.objective_value(params, supervised_objective(x, y))


# -- unsupervised -------------------------------------------------------------


def _view_matrices(x, aug_seeds, aug):
    x = _check_batch(x)
    aug_seeds = list(aug_seeds)
    if len(aug_seeds) != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} instances but {len(aug_seeds)} view seeds")
    triples = [unsup_views(row, s, aug) for row, s in zip(x, aug_seeds)]
    w0 = np.stack([t[0] for t in triples])
    w1 = np.stack([t[1] for t in triples])
    strong = np.stack([t[2] for t in triples])
    return w0, w1, strong


def _pair_entropy(o):
    q = softmax(o, axis=-1)
    ent = -(q * _clamped_log(q)).sum(axis=2).sum(axis=1)
    return q, ent


def em_objective(w0, w1):
    """Summed binary entropy of all pair probabilities over both weak views."""

    def obj(net):
        _, o0 = net.heads(w0)
        _, o1 = net.heads(w1)
        _, ent0 = _pair_entropy(o0)
        _, ent1 = _pair_entropy(o1)
        return (ent0 + ent1).mean()

    return obj


def oc_objective(w0, w1):
    """Squared distance between the two weak views' pair probabilities."""

    def obj(net):
        _, o0 = net.heads(w0)
        _, o1 = net.heads(w1)
        d = softmax(o0, axis=-1) - softmax(o1, axis=-1)
        return (d * d).sum(axis=2).sum(axis=1).mean()

    return obj


def _fm_decisions(z_weak, o_weak, rho_conf, rule):
    p = _stable_softmax(z_weak)
    q = _stable_softmax(o_weak)
    y_hat = p.argmin(axis=1) if rule == "argmin" else p.argmax(axis=1)
    rows = np.arange(len(y_hat))
    confidence = p.max(axis=1)
    inlier = q[rows, y_hat, 0]
    mask = (inlier > 0.5) & (confidence > rho_conf)
    return y_hat, confidence, inlier, mask


def fm_objective(w0, strong, rho_conf, rule="argmax"):
    """Confidence-masked cross-entropy of weak-view pseudo-labels on the
    strong view.  Pseudo-labels and masks are treated as constants."""

    def obj(net):
        z_w, o_w = net.heads(w0)
        y_hat, _, _, mask = _fm_decisions(z_w.data, o_w.data, rho_conf, rule)
        z_s, _ = net.heads(strong)
        logp = _clamped_log(softmax(z_s, axis=-1))
        ce = -logp[np.arange(len(y_hat)), y_hat]
        return (ce * mask.astype(np.float64)).mean()

    return obj


def em_loss(params, x, aug_seeds, aug=AugmentConfig()):
    w0, w1, _ = _view_matrices(x, aug_seeds, aug)
    return nn.objective_value(params, em_objective(w0, w1))


def oc_loss(params, x, aug_seeds, aug=AugmentConfig()):
    w0, w1, _ = _view_matrices(x, aug_seeds, aug)
    return nn.objective_value(params, oc_objective(w0, w1))


def fm_loss(params, x, aug_seeds, rho_conf, aug=AugmentConfig(), rule="argmax"):
    w0, _, strong = _view_matrices(x, aug_seeds, aug)
    return nn.objective_value(params, fm_objective(w0, strong, rho_conf, rule))


def unsup_objective(x, aug_seeds, weights, rho_conf, aug=AugmentConfig(),
                    rule="argmax"):
    """Weighted sum of the three unsupervised terms, sharing view forwards."""
    w0, w1, strong = _view_matrices(x, aug_seeds, aug)

    def obj(net):
        z0, o0 = net.heads(w0)
        _, o1 = net.heads(w1)
        q0, ent0 = _pair_entropy(o0)
        q1, ent1 = _pair_entropy(o1)
        em = ent0 + ent1
        d = q0 - q1
        oc = (d * d).sum(axis=2).sum(axis=1)
        y_hat, _, _, mask = _fm_decisions(z0.data, o0.data, rho_conf, rule)
        z_s, _ = net.heads(strong)
        logp = _clamped_log(softmax(z_s, axis=-1))
        fm = -logp[np.arange(len(y_hat)), y_hat] * mask.astype(np.float64)
        per_instance = (
            weights.lambda1 * em + weights.lambda2 * oc + weights.lambda3 * fm
        )
        return per_instance.mean()

    return obj


def unsup_loss(params, x, aug_seeds, weights=LossWeights(), rho_conf=0.95,
               aug=AugmentConfig(), rule="argmax"):
    """Batch unsupervised loss: mean of per-instance values."""
    return nn.objective_value(
        params, unsup_objective(x, aug_seeds, weights, rho_conf, aug, rule)
    )


def unsup_loss_instance(params, x, aug_seed, weights=LossWeights(),
                        rho_conf=0.95, aug=AugmentConfig(), rule="argmax"):
    """Unsupervised loss of a single instance."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return unsup_loss(params, x, [aug_seed], weights, rho_conf, aug, rule)


def pseudo_label(params, x, rho_conf, aug_seed=None, aug=AugmentConfig(),
                 rule="argmax"):
    """Pseudo-label decision for one instance.

    With an aug_seed the decision is made on the instance's first weak
    view (matching the masked pseudo-label term); without one it is
    made on the raw features.
    """
    if not 0.0 < rho_conf < 1.0:
        raise ConfigError(f"rho_conf must be in (0, 1), got {rho_conf}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    view = unsup_views(x, aug_seed, aug)[0] if aug_seed is not None else x
    pred = nn.forward(params, view)
    y_hat = int(pred.p.argmin() if rule == "argmin" else pred.p.argmax())
    confidence = float(pred.p.max())
    inlier = float(pred.q[y_hat, 0])
    return PseudoLabelDecision(
        y_hat=y_hat,
        confidence=confidence,
        ova_inlier=inlier,
        mask=bool(inlier > 0.5 and confidence > rho_conf),
    )
