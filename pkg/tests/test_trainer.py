"""Training-loop contracts: config validation, selection cadence,
deterministic replay, the labeled-only baseline's untouched rejection
head, and the empty-pool fallback."""

import numpy as np
import pytest

from openset_lab import nn
from openset_lab.data import (
    OpenSetConfig,
    derive_seed,
    export_csv,
    import_csv,
    make_openset_mixture,
)
from openset_lab.errors import ConfigError
from openset_lab.losses import LossWeights
from openset_lab.selection import ThresholdPolicy
from openset_lab.trainer import (
    METRICS_COLUMNS,
    TrainConfig,
    baseline_labeled_only,
    train,
)


def tiny_data(seed=0):
    return make_openset_mixture(OpenSetConfig(
        dim=5, k_seen=2, k_unseen=1, labels_per_class=4,
        unlabeled_per_class=6, val_per_class=3, test_per_class=5,
        cluster_separation=2.0, cluster_stddev=0.3,
        unfriendly_fraction=0.25, unfriendly_noise_scale=5.0, seed=seed))


def tiny_cfg(**overrides):
    base = dict(epochs=3, iters_per_epoch=3, batch_l=4, batch_u=4,
                lr0=0.05, selection="none", seed=0, hidden_sizes=(8,))
    base.update(overrides)
    return TrainConfig(**base)


GV = dict(selection="gv", threshold=ThresholdPolicy(kind="otsu"))


# -- config validation ----------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ConfigError):
        tiny_cfg(epochs=-1)
    with pytest.raises(ConfigError):
        tiny_cfg(iters_per_epoch=0)
    with pytest.raises(ConfigError):
        tiny_cfg(batch_l=0)
    with pytest.raises(ConfigError):
        tiny_cfg(lr0=0.0)
    with pytest.raises(ConfigError):
        tiny_cfg(momentum=1.0)
    with pytest.raises(ConfigError):
        tiny_cfg(selection="entropy")
    with pytest.raises(ConfigError):
        tiny_cfg(selection="gv")  # active selection needs a threshold policy
    with pytest.raises(ConfigError):
        tiny_cfg(**GV, e_s=0)
    with pytest.raises(ConfigError):
        tiny_cfg(rho_conf=1.0)
    with pytest.raises(ConfigError):
        tiny_cfg(hidden_sizes=(8, 0))
    with pytest.raises(ConfigError):
        tiny_cfg(pseudo_rule="max")


# -- loop structure ---------------------------------------------------------------


def test_zero_epochs_returns_initial_params():
    data = tiny_data()
    res = train(tiny_cfg(epochs=0), data)
    assert res.log.records == [] and res.selections == []
    init = nn.init_mlp([data.dim, 8], data.k_seen, seed=derive_seed(0, 1))
    np.testing.assert_array_equal(res.params.flatten(), init.flatten())


def test_selection_none_keeps_whole_pool():
    data = tiny_data()
    res = train(tiny_cfg(), data)
    assert [r.selected_count for r in res.log.records] == [len(data.u_x)] * 3
    assert res.selections == []
    for r in res.log.records:
        assert np.isfinite(r.loss_s) and np.isfinite(r.loss_u)


def test_selection_cadence_and_stale_reuse():
    data = tiny_data()
    res = train(tiny_cfg(**GV, epochs=4, e_s=2), data)
    assert [s.epoch for s in res.selections] == [0, 2]
    counts = [r.selected_count for r in res.log.records]
    assert counts[0] == counts[1] and counts[2] == counts[3]


def test_selection_every_epoch():
    data = tiny_data()
    res = train(tiny_cfg(**GV, epochs=3, e_s=1), data)
    assert [s.epoch for s in res.selections] == [0, 1, 2]
    for r in res.log.records:
        assert 0.0 <= r.sel_precision <= 1.0
        assert 0.0 <= r.sel_recall <= 1.0


def test_lr_column_follows_cosine_schedule():
    res = train(tiny_cfg(epochs=5, lr0=0.03), tiny_data())
    for t, r in enumerate(res.log.records):
        assert r.lr == nn.cosine_lr(t, 5, 0.03)


def test_replay_is_byte_identical(tmp_path):
    data = tiny_data(3)
    cfg = tiny_cfg(**GV, seed=7)
    a = train(cfg, data)
    b = train(cfg, data)
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.log.to_csv(pa)
    b.log.to_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()
    header = pa.read_text().splitlines()[0]
    assert header.split(",") == METRICS_COLUMNS


def test_threads_do_not_change_training():
    data = tiny_data(4)
    cfg = tiny_cfg(**GV)
    one = train(cfg, data, threads=1)
    four = train(cfg, data, threads=4)
    np.testing.assert_array_equal(one.params.flatten(), four.params.flatten())
    assert [r.loss_s for r in one.log.records] == [
        r.loss_s for r in four.log.records]


def test_seed_changes_trajectory():
    data = tiny_data(5)
    a = train(tiny_cfg(seed=0), data)
    b = train(tiny_cfg(seed=1), data)
    assert not np.array_equal(a.params.flatten(), b.params.flatten())


# -- baseline and fallbacks --------------------------------------------------------


def test_labeled_only_never_touches_rejection_head():
    data = tiny_data(6)
    cfg = tiny_cfg(epochs=4)
    res = baseline_labeled_only(cfg, data)
    init = nn.init_mlp([data.dim, 8], data.k_seen, seed=derive_seed(0, 1))
    k, h = data.k_seen, 8
    n_ova = 2 * k * h + 2 * k
    got, start = res.params.flatten(), init.flatten()
    np.testing.assert_array_equal(got[-n_ova:], start[-n_ova:])
    assert not np.array_equal(got[:-n_ova], start[:-n_ova])
    assert len(res.log.records) == 4
    for r in res.log.records:
        assert r.loss_u == 0.0 and r.selected_count == 0
        assert np.isnan(r.sel_precision) and np.isnan(r.sel_recall)


def test_empty_kept_subset_skips_unsupervised_term():
    data = tiny_data(7)
    cfg = tiny_cfg(selection="gv",
                   threshold=ThresholdPolicy(kind="topk", k=len(data.u_x)))
    res = train(cfg, data)
    assert all(r.selected_count == 0 for r in res.log.records)
    assert all(r.loss_u == 0.0 for r in res.log.records)


def test_active_selection_requires_unlabeled_data(tmp_path):
    data = tiny_data(8)
    path = tmp_path / "data.csv"
    export_csv(data, path)
    kept = [line for line in path.read_text().splitlines()
            if not line.startswith("U,")]
    path.write_text("\n".join(kept) + "\n")
    no_u = import_csv(path)
    with pytest.raises(ConfigError):
        train(tiny_cfg(**GV), no_u)
    res = train(tiny_cfg(), no_u)  # passive mode still works
    assert all(r.selected_count == 0 for r in res.log.records)
    assert all(np.isnan(r.sel_precision) for r in res.log.records)


def test_unsupervised_weights_steer_the_loss():
    data = tiny_data(9)
    heavy = train(tiny_cfg(weights=LossWeights(2.0, 2.0, 2.0)), data)
    light = train(tiny_cfg(weights=LossWeights(0.0, 0.0, 0.0)), data)
    assert all(r.loss_u == 0.0 for r in light.log.records)
    assert any(r.loss_u != 0.0 for r in heavy.log.records)
