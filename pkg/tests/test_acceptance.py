"""Acceptance suite: one test per shipped guarantee, thirteen in all.

Each test pins its own tolerance and asserts its wall-clock budget, so
`pytest -v` doubles as the pass/fail checklist.  Order follows the
dependency chain: gradients, thresholds, metrics, oracles, convergence
rates, proof-step inequalities, selection quality, end-to-end ordering,
and CLI determinism.
"""

import json
import time

import numpy as np

from openset_lab import nn
from openset_lab.cli import main
from openset_lab.data import derive_seed, make_openset_mixture, seeded_rng
from openset_lab.losses import (
    LossWeights,
    ce_objective,
    em_objective,
    fm_objective,
    oc_objective,
    ova_objective,
    unsup_objective,
)
from openset_lab.metrics import auroc, selection_quality
from openset_lab.selection import (
    ThresholdPolicy,
    otsu_threshold,
    run_selection,
    topk_threshold,
)
from openset_lab.theory import (
    OracleSpec,
    QuadraticObjective,
    TheoryScenario,
    _mixture_draws,
    check_descent_step,
    check_drift_bound,
    check_lsm_bound,
    check_mixture_variance_bound,
    equal_share_theta0,
    erb_bound,
    fit_rate,
    random_lsm_event,
    record_gd_trajectory,
    run_sgd_mixture,
)

from conftest import acceptance_config, e2e_arm, random_batch, tiny_net
from test_selection import naive_otsu

PINNED = dict(dim=20, mu=0.5, l_smooth=5.0)
PINNED_SPEC = OracleSpec(sigma2=1.0, epsilon=0.05, nu=1.0e4)


def elapsed_under(t0, limit):
    took = time.perf_counter() - t0
    assert took < limit, f"took {took:.1f}s, budget {limit}s"


def caseb_scenario(total, seed_root=0, replications=20):
    return TheoryScenario(
        case="b", spec=PINNED_SPEC, lam=1.0, tau=1.0, n=total,
        replications=replications, seed=derive_seed(seed_root, 2, total),
        delta0=1.0, **PINNED)


def casec_scenario(total, seed_tag, seed_root=0, replications=20):
    half = total // 2
    return TheoryScenario(
        case="c", spec=PINNED_SPEC, lam=0.5, tau=1.0, n=total - half, m=half,
        replications=replications, seed=derive_seed(seed_root, 3, seed_tag),
        delta0=1.0, **PINNED)


def test_criterion_01_loss_gradients_match_finite_differences():
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        params = tiny_net(i)
        rng = np.random.default_rng(1000 + i)
        x = random_batch(rng, 3, 4)
        y = rng.integers(0, 3, size=3)
        w0 = random_batch(rng, 3, 4)
        w1 = w0 + 0.1 * rng.standard_normal(w0.shape)
        strong = random_batch(rng, 3, 4)
        seeds = [int(s) for s in rng.integers(0, 2**31, size=3)]
        objectives = [
            ce_objective(x, y),
            ova_objective(x, y),
            em_objective(w0, w1),
            oc_objective(w0, w1),
            fm_objective(w0, strong, rho_conf=0.5),
            unsup_objective(x, seeds, LossWeights(0.8, 1.2, 0.6), 0.5),
        ]
        for obj in objectives:
            g = nn.grad(params, obj)
            g_fd = nn.finite_diff_grad(params, obj, h=1e-5)
            rel = np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g_fd)), 1e-12)
            worst = max(worst, rel)
    assert worst < 1e-4, f"worst relative gradient error {worst:.2e}"
    elapsed_under(t0, 60)


def test_criterion_02_otsu_matches_exhaustive_scan():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    for trial in range(100):
        n = int(rng.integers(2, 501))
        scores = rng.standard_normal(n) ** 2
        if trial % 3 == 0:
            scores = np.round(scores, 1)  # exact ties
        assert otsu_threshold(scores) == naive_otsu(scores), trial
    elapsed_under(t0, 10)


def test_criterion_03_topk_discards_exactly_k():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for trial in range(50):
        n = int(rng.integers(2, 61))
        scores = rng.standard_normal(n) ** 2
        assert len(np.unique(scores)) == n  # distinct by construction
        for k in range(1, n + 1):
            rho = topk_threshold(scores, k)
            assert int(np.sum(scores >= rho)) == k, (trial, k)
    elapsed_under(t0, 5)


def test_criterion_04_auroc_matches_pair_counting():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    for trial in range(100):
        n_id = int(rng.integers(1, 251))
        n_ood = int(rng.integers(1, 251))
        s_id = rng.standard_normal(n_id)
        s_ood = rng.standard_normal(n_ood) + 0.3
        if trial % 4 == 0:
            s_id, s_ood = np.round(s_id, 1), np.round(s_ood, 1)
        wins = np.sum(s_ood[:, None] > s_id[None, :])
        ties = np.sum(s_ood[:, None] == s_id[None, :])
        brute = (wins + 0.5 * ties) / (n_id * n_ood)
        assert abs(auroc(s_id, s_ood) - brute) <= 1e-12, trial
    elapsed_under(t0, 10)


def test_criterion_05_oracle_moments_exact():
    t0 = time.perf_counter()
    draws = 100000
    objective = QuadraticObjective.build(seed=5, **PINNED)
    theta = objective.theta_star + seeded_rng(51).standard_normal(20)
    grad = objective.gradient(theta)
    g_norm = float(np.linalg.norm(grad))
    kinds = {"id": (1.0, 1.0), "friendly": (0.0, 1.0), "unfriendly": (0.0, 0.0)}
    for si, (s2, eps, nu) in enumerate([(1.0, 0.05, 1.0e4),
                                        (0.25, 0.2, 1.0e2)]):
        spec = OracleSpec(sigma2=s2, epsilon=eps, nu=nu)
        for ki, (kind, (lam, tau)) in enumerate(kinds.items()):
            rng = seeded_rng(derive_seed(6, si, ki))
            g = _mixture_draws(np.tile(grad, (draws, 1)), spec, lam, tau, rng)
            # unbiasedness, coordinate by coordinate, within 3 SE
            mean = g.mean(axis=0)
            se = g.std(axis=0, ddof=1) / np.sqrt(draws)
            assert np.all(np.abs(mean - grad) <= 3.0 * se + 1e-12), (si, kind)
            # second moment matches c^2 G^2 + sigma^2 within 3 SE; the
            # small relative floor absorbs rounding when the deviation
            # norm is deterministic and the SE collapses to float noise
            dev_sq = ((g - grad) ** 2).sum(axis=1)
            expected = spec.second_moment(kind, g_norm)
            se_v = dev_sq.std(ddof=1) / np.sqrt(draws)
            tol = 3.0 * se_v + 1e-9 * expected
            assert abs(dev_sq.mean() - expected) <= tol, (si, kind)
    elapsed_under(t0, 60)


def test_criterion_06_caseb_rate_and_bound():
    t0 = time.perf_counter()
    grid = [100, 1000, 10000, 100000]
    gaps = []
    for total in grid:
        res = run_sgd_mixture(caseb_scenario(total))
        assert not res.diverged.any()
        gaps.append(res.final_gap)
        bound = erb_bound(total, 0.5, 5.0, 1.0, 1.0)
        assert res.final_gap <= 3.0 * bound, (total, res.final_gap, bound)
    slope, _ = fit_rate(grid, gaps)
    assert -1.3 <= slope <= -0.7, slope
    elapsed_under(t0, 300)


def test_criterion_07_casec_rate():
    t0 = time.perf_counter()
    grid = [100, 1000, 10000, 100000]
    gaps = []
    for total in grid:
        res = run_sgd_mixture(casec_scenario(total, seed_tag=total))
        assert not res.diverged.any()
        gaps.append(res.final_gap)
    slope, _ = fit_rate(grid, gaps)
    assert -1.3 <= slope <= -0.7, slope
    elapsed_under(t0, 300)


def test_criterion_08_casea_stalls_where_matched_casec_converges():
    t0 = time.perf_counter()
    scn_a = TheoryScenario(
        case="a", spec=PINNED_SPEC, lam=1.0 / 3.0, tau=0.5,
        n=1000, m=1000, m_prime=1000, replications=50,
        seed=derive_seed(0, 1, 0), delta0=1.0, **PINNED)
    res_a = run_sgd_mixture(scn_a)
    assert res_a.final_gap >= 0.2, res_a.final_gap
    total = scn_a.steps
    res_c = run_sgd_mixture(casec_scenario(
        total, seed_tag=derive_seed(7, total), replications=50))
    assert res_c.final_gap <= 0.01, res_c.final_gap
    elapsed_under(t0, 120)


def test_criterion_09_pointwise_descent_and_variance_inequalities():
    t0 = time.perf_counter()
    objective = QuadraticObjective.build(seed=derive_seed(0, 11), **PINNED)
    rng = np.random.default_rng(derive_seed(0, 17))
    for i in range(20):
        theta = objective.theta_star + rng.standard_normal(20)
        eta = rng.uniform(0.1, 1.0) / 5.0
        lam = rng.uniform(0.2, 1.0)
        tau = rng.uniform(0.0, 1.0)
        point_seed = derive_seed(0, 19, i)
        descent = check_descent_step(objective, PINNED_SPEC, lam, tau, theta,
                                     eta, draws=100000, seed=point_seed)
        assert descent.passed, (i, descent.margin, descent.stderr)
        variance = check_mixture_variance_bound(
            objective, PINNED_SPEC, lam, tau, theta, draws=100000,
            seed=point_seed)
        assert variance.passed, (i, variance.margin, variance.stderr)
    elapsed_under(t0, 180)


def test_criterion_10_drift_and_selection_loss_bounds():
    t0 = time.perf_counter()
    objective = QuadraticObjective.build(seed=derive_seed(0, 11), **PINNED)
    theta0 = equal_share_theta0(objective, 1.0)
    _, grads = record_gd_trajectory(objective, theta0, 0.02, 1000)
    drift = check_drift_bound(grads, 0.02, 5.0, window=10)
    assert drift.passed, drift.margin
    for i in range(20):
        objs, theta, g_bar, rho = random_lsm_event(
            20, 0.5, 5.0, 40, derive_seed(0, 23, i))
        rep = check_lsm_bound(objs, theta, rho, g_bar, 0.5)
        assert rep.passed, (i, rep.margin)
    elapsed_under(t0, 60)


def test_criterion_11_gv_otsu_recovers_clean_instances():
    t0 = time.perf_counter()
    precisions, recalls = [], []
    for seed in range(10):
        data = make_openset_mixture(acceptance_config(seed))
        params = nn.init_mlp([data.dim, 32], data.k_seen,
                             seed=derive_seed(seed, 1))
        res = run_selection(params, data, "gv", ThresholdPolicy(kind="otsu"),
                            seed=seed)
        p, r = selection_quality(res.selected, ~data.u_planted)
        precisions.append(p)
        recalls.append(r)
    assert np.mean(precisions) >= 0.9, np.mean(precisions)
    assert np.mean(recalls) >= 0.9, np.mean(recalls)
    elapsed_under(t0, 300)


def test_criterion_12_selection_orders_end_to_end_accuracy():
    t0 = time.perf_counter()
    wins = {"gv": 0, "loss": 0, "none": 0}
    for seed in range(10):
        data = make_openset_mixture(acceptance_config(seed))
        final = {}
        for arm, mode in [("gv", "ssl"), ("loss", "ssl"), ("none", "ssl"),
                          ("labeled_only", "labeled_only")]:
            sel = arm if mode == "ssl" else "none"
            res = e2e_arm(data, seed, sel, mode)
            final[arm] = res.log.records[-1].id_acc
        if final["gv"] >= final["none"]:
            wins["gv"] += 1
        if final["loss"] >= final["none"]:
            wins["loss"] += 1
        if final["none"] >= final["labeled_only"]:
            wins["none"] += 1
    assert wins["gv"] >= 7, wins
    assert wins["loss"] >= 7, wins
    assert wins["none"] >= 7, wins
    elapsed_under(t0, 900)


def test_criterion_13_cli_reruns_are_byte_identical(tmp_path):
    t0 = time.perf_counter()
    synth_cfg = {
        "dim": 5, "k_seen": 2, "k_unseen": 1, "labels_per_class": 4,
        "unlabeled_per_class": 6, "val_per_class": 3, "test_per_class": 5,
        "cluster_separation": 2.0, "cluster_stddev": 0.3,
        "unfriendly_fraction": 0.25, "unfriendly_noise_scale": 5.0, "seed": 0,
    }
    train_cfg = {
        "mode": "ssl", "dim": 5, "epochs": 2, "iters_per_epoch": 3,
        "batch_l": 4, "batch_u": 4, "selection": "gv",
        "threshold": {"kind": "otsu"}, "e_s": 1, "hidden_sizes": [8],
        "seed": 0,
    }
    theory_cfg = {
        "seed": 0, "replications": 5, "delta0": 1.0,
        "objective": {"dim": 10, "mu": 0.5, "l_smooth": 5.0},
        "oracle": {"sigma2": 1.0, "epsilon": 0.05, "nu": 10000.0},
        "cases": [{"case": "b", "grid": [200, 500]}],
        "checks": {"enabled": True, "points": 2, "draws": 5000,
                   "drift_steps": 200, "drift_window": 5,
                   "lsm_events": 2, "lsm_instances": 10},
    }
    for name, payload in [("synth.json", synth_cfg), ("train.json", train_cfg),
                          ("theory.json", theory_cfg)]:
        (tmp_path / name).write_text(json.dumps(payload))

    def run(cmd, cfg_name, out, threads, data=None):
        argv = [cmd, "--config", str(tmp_path / cfg_name),
                "--out", str(tmp_path / out), "--threads", str(threads),
                "--quiet"]
        if data is not None:
            argv += ["--data", str(data)]
        assert main(argv) == 0, (cmd, out)
        return tmp_path / out

    def delim_files(out):
        return sorted(p.name for p in out.iterdir()
                      if p.suffix in (".csv", ".json"))

    def assert_same(a, b):
        assert delim_files(a) == delim_files(b)
        for name in delim_files(a):
            assert (a / name).read_bytes() == (b / name).read_bytes(), (
                a.name, name)

    s1 = run("synth", "synth.json", "s1", 1)
    s8 = run("synth", "synth.json", "s8", 8)
    assert_same(s1, s8)
    data = s1 / "dataset.csv"
    assert_same(run("train", "train.json", "t1", 1, data),
                run("train", "train.json", "t8", 8, data))
    assert_same(run("theory", "theory.json", "th1", 1),
                run("theory", "theory.json", "th8", 8))
    elapsed_under(t0, 120)
