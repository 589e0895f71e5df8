"""Shared fixtures: pinned synthetic mixtures and training recipes.

Two mixture shapes are pinned here. The acceptance mixture is small and
hard enough that selection quality and end-to-end ordering are both
non-degenerate. The invariant mixture is easier (more labels, tighter
clusters) and backs the planted-score invariants, which want a clean
margin rather than a stress test.
"""

import numpy as np
import pytest

import openset_lab as ol

# shapes are pinned; tests rely on the exact values
ACCEPT_SHAPE = dict(
    dim=6,
    k_seen=3,
    k_unseen=1,
    labels_per_class=3,
    unlabeled_per_class=50,
    val_per_class=10,
    test_per_class=25,
    cluster_separation=1.5,
    cluster_stddev=0.2,
    unfriendly_fraction=0.1,
    unfriendly_noise_scale=10.0,
)

INVARIANT_SHAPE = dict(
    dim=6,
    k_seen=3,
    k_unseen=1,
    labels_per_class=10,
    unlabeled_per_class=30,
    val_per_class=10,
    test_per_class=25,
    cluster_separation=2.0,
    cluster_stddev=0.1,
    unfriendly_fraction=0.1,
    unfriendly_noise_scale=10.0,
)


def acceptance_config(seed):
    return ol.OpenSetConfig(seed=seed, **ACCEPT_SHAPE)


def invariant_config(seed):
    return ol.OpenSetConfig(seed=seed, **INVARIANT_SHAPE)


def sup_warm_params(data, seed):
    """Supervised-only warmup; the score-based ranking needs trained heads."""
    cfg = ol.TrainConfig(
        epochs=30,
        iters_per_epoch=20,
        batch_l=20,
        batch_u=1,
        lr0=0.1,
        selection="none",
        weights=ol.LossWeights(0.0, 0.0, 0.0),
        seed=seed,
        hidden_sizes=(32,),
    )
    return ol.train(cfg, data).params


def e2e_arm(data, seed, selection, mode, epochs=6):
    """One matched-budget training arm on the acceptance mixture."""
    threshold = None
    if selection in ("gv", "loss"):
        # top-k keeps the kept-pool size stable across mechanisms
        threshold = ol.ThresholdPolicy(kind="topk", k=15)
    cfg = ol.TrainConfig(
        epochs=epochs,
        iters_per_epoch=6,
        batch_l=6,
        batch_u=6,
        selection=selection,
        threshold=threshold,
        e_s=1,
        seed=ol.derive_seed(seed, 99),
        hidden_sizes=(32,),
    )
    if mode == "labeled_only":
        return ol.baseline_labeled_only(cfg, data)
    return ol.train(cfg, data)


@pytest.fixture(scope="session")
def accept_data():
    return ol.make_openset_mixture(acceptance_config(0))


@pytest.fixture(scope="session")
def invariant_data():
    return ol.make_openset_mixture(invariant_config(0))


@pytest.fixture(scope="session")
def warm_params(invariant_data):
    return sup_warm_params(invariant_data, 0)


def tiny_net(seed, dim=4, k=3, hidden=(5,)):
    return ol.init_mlp((dim,) + tuple(hidden), k, seed=seed)


def random_batch(rng, n, dim):
    return rng.standard_normal((n, dim))
