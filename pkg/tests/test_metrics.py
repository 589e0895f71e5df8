"""Evaluation contracts: rank-sum AUROC against pair counting, confusion
bookkeeping, the selection precision/recall conventions, and the report
serialization."""

import json

import numpy as np
import pytest

import openset_lab as ol
from openset_lab import nn
from openset_lab.data import make_openset_mixture
from openset_lab.errors import ConfigError, ShapeError
from openset_lab.metrics import (
    EvalReport,
    auroc,
    confusion_to_csv,
    evaluate,
    merge_unseen_rows,
    ood_scores,
    pseudo_accuracy,
    selection_quality,
    top1_accuracy,
    unlabeled_confusion,
)
from openset_lab.selection import ThresholdPolicy, run_selection

from conftest import acceptance_config, tiny_net


def naive_auroc(scores_id, scores_ood):
    """O(n*m) pair counting: P(ood > id) + 0.5 P(tie)."""
    total = 0.0
    for o in scores_ood:
        for i in scores_id:
            if o > i:
                total += 1.0
            elif o == i:
                total += 0.5
    return total / (len(scores_id) * len(scores_ood))


# -- auroc ---------------------------------------------------------------------


def test_auroc_frozen_cases():
    assert auroc([0.0, 1.0], [2.0, 3.0]) == 1.0
    assert auroc([2.0, 3.0], [0.0, 1.0]) == 0.0
    assert auroc([1.0, 1.0], [1.0, 1.0]) == 0.5


def test_auroc_matches_pair_counting():
    rng = np.random.default_rng(0)
    for trial in range(25):
        n_id = int(rng.integers(1, 40))
        n_ood = int(rng.integers(1, 40))
        s_id = rng.standard_normal(n_id)
        s_ood = rng.standard_normal(n_ood) + 0.5
        if trial % 4 == 0:
            s_id = np.round(s_id, 1)  # force ties
            s_ood = np.round(s_ood, 1)
        assert auroc(s_id, s_ood) == pytest.approx(
            naive_auroc(s_id, s_ood), abs=1e-12), trial


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    s_id = rng.standard_normal(30)
    s_ood = rng.standard_normal(20) + 1.0
    assert auroc(np.exp(s_id), np.exp(s_ood)) == auroc(s_id, s_ood)


def test_auroc_empty_side_rejected():
    with pytest.raises(ValueError):
        auroc([], [1.0])
    with pytest.raises(ValueError):
        auroc([1.0], [])


# -- classifier metrics ---------------------------------------------------------


def test_top1_accuracy_zero_net_predicts_first_class():
    params = nn.init_mlp([4, 5], 3, seed=0)
    params = params.unflatten(np.zeros(params.n_params))
    x = np.random.default_rng(2).standard_normal((8, 4))
    y = np.array([0, 0, 0, 1, 1, 2, 2, 2])
    assert top1_accuracy(params, x, y) == pytest.approx(3 / 8)


def test_top1_accuracy_permutation_invariant():
    params = tiny_net(0)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((12, 4))
    y = rng.integers(0, 3, size=12)
    perm = rng.permutation(12)
    assert top1_accuracy(params, x, y) == top1_accuracy(params, x[perm],
                                                        y[perm])
    with pytest.raises(ValueError):
        top1_accuracy(params, np.empty((0, 4)), np.array([], int))


def test_ood_scores_rules_and_validation():
    params = tiny_net(1)
    x = np.random.default_rng(4).standard_normal((6, 4))
    ova = ood_scores(params, x)
    neg = ood_scores(params, x, score_rule="neg_max_inlier")
    assert ova.shape == neg.shape == (6,)
    assert np.all((ova >= 0) & (ova <= 1))
    assert np.all((neg >= 0) & (neg <= 1))
    with pytest.raises(ConfigError):
        ood_scores(params, x, score_rule="energy")


# -- confusion bookkeeping -------------------------------------------------------


def test_unlabeled_confusion_counts_and_abstain():
    params = nn.init_mlp([4, 5], 3, seed=0)
    zero = params.unflatten(np.zeros(params.n_params))
    rng = np.random.default_rng(5)
    u_x = rng.standard_normal((20, 4))
    u_truth = rng.integers(0, 5, size=20)  # 3 seen + 2 unseen classes
    conf = unlabeled_confusion(zero, u_x, u_truth, rho_conf=0.9, k_seen=3)
    assert conf.shape == (5, 4)
    assert conf.sum() == 20
    # the zero net never clears the inlier gate, so everything abstains
    assert conf[:, -1].sum() == 20
    for c in range(5):
        assert conf[c].sum() == int(np.sum(u_truth == c))


def test_unlabeled_confusion_validation():
    params = tiny_net(2)
    with pytest.raises(ValueError):
        unlabeled_confusion(params, np.empty((0, 4)), np.array([], int),
                            0.9, 3)
    with pytest.raises(ValueError):
        unlabeled_confusion(params, np.ones((2, 4)), np.array([0, -1]),
                            0.9, 3)


def test_merge_unseen_rows():
    conf = np.arange(20).reshape(5, 4)
    merged = merge_unseen_rows(conf, k_seen=3)
    assert merged.shape == (4, 4)
    np.testing.assert_array_equal(merged[:3], conf[:3])
    np.testing.assert_array_equal(merged[3], conf[3] + conf[4])
    padded = merge_unseen_rows(conf[:3], 3)  # no unseen rows: zero row added
    np.testing.assert_array_equal(padded, np.vstack([conf[:3], np.zeros(4, int)]))
    with pytest.raises(ShapeError):
        merge_unseen_rows(conf[:2], 3)


def test_confusion_to_csv(tmp_path):
    conf = np.array([[5, 1, 0, 2], [0, 6, 1, 1], [0, 0, 7, 1], [1, 1, 1, 9]])
    path = tmp_path / "confusion.csv"
    confusion_to_csv(conf, k_seen=3, path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "truth,pred_0,pred_1,pred_2,abstain"
    assert len(lines) == 5
    assert lines[1].startswith("true_0,5,1,0,2"[:4])
    assert lines[-1].split(",")[1:] == ["1", "1", "1", "9"]


def test_pseudo_accuracy_nan_without_seen_items():
    params = tiny_net(3)
    u_x = np.ones((3, 4))
    assert np.isnan(pseudo_accuracy(params, u_x, np.array([3, 4, 3]), 3))
    val = pseudo_accuracy(params, u_x, np.array([0, 1, 3]), 3)
    assert 0.0 <= val <= 1.0


# -- selection quality conventions ------------------------------------------------


def test_selection_quality_conventions():
    clean = np.array([True, True, False, False])
    # empty selection: vacuous precision, zero recall
    assert selection_quality(np.zeros(4, bool), clean) == (1.0, 0.0)
    # perfect selection
    assert selection_quality(clean, clean) == (1.0, 1.0)
    # everything selected: precision = clean fraction
    p, r = selection_quality(np.ones(4, bool), clean)
    assert (p, r) == (0.5, 1.0)
    # nothing clean exists: recall is vacuous
    p, r = selection_quality(np.array([True, False]), np.zeros(2, bool))
    assert (p, r) == (0.0, 1.0)
    with pytest.raises(ShapeError):
        selection_quality(np.ones(3, bool), np.ones(4, bool))


def test_selection_quality_random_half():
    rng = np.random.default_rng(6)
    clean = rng.random(4000) < 0.7
    selected = rng.random(4000) < 0.5
    p, r = selection_quality(selected, clean)
    assert p == pytest.approx(0.7, abs=0.05)
    assert r == pytest.approx(0.5, abs=0.05)


# -- evaluate + report ------------------------------------------------------------


def test_evaluate_full_snapshot():
    data = make_openset_mixture(acceptance_config(0))
    params = nn.init_mlp([data.dim, 32], data.k_seen,
                         seed=ol.derive_seed(0, 1))
    sel = run_selection(params, data, "gv", ThresholdPolicy(kind="otsu"),
                        seed=0)
    report = evaluate(params, data, rho_conf=0.95, selection_result=sel)
    assert 0.0 <= report.id_accuracy <= 1.0
    assert 0.0 <= report.auroc <= 1.0
    assert 0.0 <= report.selection_precision <= 1.0
    assert 0.0 <= report.selection_recall <= 1.0
    assert report.confusion.sum() == len(data.u_x)
    blob = json.loads(report.to_json())
    assert blob["id_accuracy"] == report.id_accuracy
    assert blob["confusion"] == report.confusion.tolist()


def test_evaluate_without_selection_or_unseen():
    cfg = acceptance_config(1)
    closed = ol.OpenSetConfig(**{**cfg.__dict__, "k_unseen": 0})
    data = make_openset_mixture(closed)
    params = nn.init_mlp([data.dim, 32], data.k_seen,
                         seed=ol.derive_seed(1, 1))
    report = evaluate(params, data, rho_conf=0.95)
    assert np.isnan(report.auroc)  # no unseen test items to rank
    assert np.isnan(report.selection_precision)
    assert np.isnan(report.selection_recall)
