"""Command-line entry points.

Three subcommands share a flag set (--config, --out, --seed, --threads,
--quiet):

  synth    generate a dataset CSV from a config
  train    run a training loop against a dataset CSV
  theory   run the SGD-on-quadratic verification suite

Configs are strict JSON: unknown keys are rejected before any work.
Exit codes: 0 success, 1 runtime failure or failed mandatory check,
2 bad usage or bad config.  All CSV/JSON outputs are byte-identical
across reruns with the same config and seed, regardless of --threads;
wall-clock timing goes to run.log, which is excluded from that
guarantee.
"""

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import report
from .data import AugmentConfig, OpenSetConfig, export_csv, import_csv, make_openset_mixture
from .data import derive_seed
from .errors import ConfigError, ParseError
from .losses import LossWeights
from .metrics import confusion_to_csv, evaluate
from .nn import save_params
from .selection import ThresholdPolicy, write_selection_csv
from .theory import (
    InequalityReport,
    OracleSpec,
    TheoryScenario,
    check_descent_step,
    check_drift_bound,
    check_lsm_bound,
    check_mixture_variance_bound,
    equal_share_theta0,
    erb_bound,
    fit_rate,
    measured_extremes,
    random_lsm_event,
    record_gd_trajectory,
    run_sgd_mixture,
    special_case_budget,
)
from .trainer import TrainConfig, baseline_labeled_only, train

log = logging.getLogger("openset_lab")


# -- strict config parsing ---------------------------------------------------


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None


def _check_keys(d, allowed, context):
    if not isinstance(d, dict):
        raise ConfigError(f"{context} must be a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(unknown)}")


def _get(d, key, kind, context, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"missing required key {key!r} in {context}")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"key {key!r} in {context} must be an integer")
    if not isinstance(value, kind):
        raise ConfigError(f"key {key!r} in {context} must be {kind.__name__}")
    return value


def parse_synth_config(d, seed_override=None):
    fields = [
        "dim", "k_seen", "k_unseen", "labels_per_class", "unlabeled_per_class",
        "val_per_class", "test_per_class", "cluster_separation",
        "cluster_stddev", "unfriendly_fraction", "unfriendly_noise_scale",
        "seed",
    ]
    _check_keys(d, fields, "synth config")
    ints = {
        name: _get(d, name, int, "synth config", required=True)
        for name in ("dim", "k_seen", "k_unseen", "labels_per_class",
                     "unlabeled_per_class", "val_per_class", "test_per_class")
    }
    floats = {
        name: _get(d, name, float, "synth config", required=True)
        for name in ("cluster_separation", "cluster_stddev",
                     "unfriendly_fraction", "unfriendly_noise_scale")
    }
    seed = _get(d, "seed", int, "synth config", required=True)
    if seed_override is not None:
        seed = seed_override
    return OpenSetConfig(seed=seed, **ints, **floats)


def parse_train_config(d, seed_override=None):
    fields = [
        "epochs", "iters_per_epoch", "batch_l", "batch_u", "lr0", "momentum",
        "selection", "threshold", "e_s", "weights", "rho_conf", "seed",
        "hidden_sizes", "augment", "pseudo_rule", "mode", "dim",
    ]
    _check_keys(d, fields, "train config")
    mode = _get(d, "mode", str, "train config", default="ssl")
    if mode not in ("ssl", "labeled_only"):
        raise ConfigError("mode must be 'ssl' or 'labeled_only'")
    threshold = None
    if "threshold" in d:
        t = d["threshold"]
        _check_keys(t, ["kind", "k"], "threshold")
        kind = _get(t, "kind", str, "threshold", required=True)
        threshold = ThresholdPolicy(kind=kind, k=_get(t, "k", int, "threshold",
                                                      default=0))
    weights = LossWeights()
    if "weights" in d:
        w = d["weights"]
        _check_keys(w, ["lambda1", "lambda2", "lambda3"], "weights")
        weights = LossWeights(
            lambda1=_get(w, "lambda1", float, "weights", default=1.0),
            lambda2=_get(w, "lambda2", float, "weights", default=1.0),
            lambda3=_get(w, "lambda3", float, "weights", default=1.0),
        )
    aug = AugmentConfig()
    if "augment" in d:
        a = d["augment"]
        _check_keys(a, ["weak_jitter", "strong_jitter", "mask_fraction"],
                    "augment")
        aug = AugmentConfig(
            weak_jitter=_get(a, "weak_jitter", float, "augment", default=0.1),
            strong_jitter=_get(a, "strong_jitter", float, "augment",
                               default=0.5),
            mask_fraction=_get(a, "mask_fraction", float, "augment",
                               default=0.25),
        )
    hidden = d.get("hidden_sizes", [32])
    if (not isinstance(hidden, list) or not hidden
            or not all(isinstance(h, int) and not isinstance(h, bool)
                       for h in hidden)):
        raise ConfigError("hidden_sizes must be a nonempty list of integers")
    seed = _get(d, "seed", int, "train config", required=True)
    if seed_override is not None:
        seed = seed_override
    cfg = TrainConfig(
        epochs=_get(d, "epochs", int, "train config", required=True),
        iters_per_epoch=_get(d, "iters_per_epoch", int, "train config",
                             required=True),
        batch_l=_get(d, "batch_l", int, "train config", required=True),
        batch_u=_get(d, "batch_u", int, "train config", required=True),
        lr0=_get(d, "lr0", float, "train config", default=0.03),
        momentum=_get(d, "momentum", float, "train config", default=0.9),
        selection=_get(d, "selection", str, "train config", default="none"),
        threshold=threshold,
        e_s=_get(d, "e_s", int, "train config", default=1),
        weights=weights,
        rho_conf=_get(d, "rho_conf", float, "train config", default=0.95),
        seed=seed,
        hidden_sizes=tuple(hidden),
        aug=aug,
        pseudo_rule=_get(d, "pseudo_rule", str, "train config",
                         default="argmax"),
    )
    return cfg, mode, _get(d, "dim", int, "train config", default=None)


def _canonical_train_echo(cfg, mode):
    echo = {
        "mode": mode,
        "epochs": cfg.epochs,
        "iters_per_epoch": cfg.iters_per_epoch,
        "batch_l": cfg.batch_l,
        "batch_u": cfg.batch_u,
        "lr0": cfg.lr0,
        "momentum": cfg.momentum,
        "selection": cfg.selection,
        "e_s": cfg.e_s,
        "weights": {"lambda1": cfg.weights.lambda1,
                    "lambda2": cfg.weights.lambda2,
                    "lambda3": cfg.weights.lambda3},
        "rho_conf": cfg.rho_conf,
        "seed": cfg.seed,
        "hidden_sizes": list(cfg.hidden_sizes),
        "augment": {"weak_jitter": cfg.aug.weak_jitter,
                    "strong_jitter": cfg.aug.strong_jitter,
                    "mask_fraction": cfg.aug.mask_fraction},
        "pseudo_rule": cfg.pseudo_rule,
    }
    if cfg.threshold is not None:
        echo["threshold"] = {"kind": cfg.threshold.kind, "k": cfg.threshold.k}
    return echo


def parse_theory_config(d, seed_override=None):
    fields = ["seed", "replications", "delta0", "objective", "oracle", "cases",
              "checks", "slope_range", "stall_min_gap", "matched_max_gap"]
    _check_keys(d, fields, "theory config")
    obj = d.get("objective", {})
    _check_keys(obj, ["dim", "mu", "l_smooth"], "objective")
    oracle = d.get("oracle", {})
    _check_keys(oracle, ["sigma2", "epsilon", "nu"], "oracle")
    checks = d.get("checks", {})
    _check_keys(checks, ["enabled", "points", "draws", "drift_steps",
                         "drift_window", "drift_eta", "lsm_events",
                         "lsm_instances"], "checks")
    seed = _get(d, "seed", int, "theory config", default=0)
    if seed_override is not None:
        seed = seed_override
    slope_range = d.get("slope_range", [-1.3, -0.7])
    if (not isinstance(slope_range, list) or len(slope_range) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in slope_range)):
        raise ConfigError("slope_range must be [low, high]")
    cases = d.get("cases", [])
    if not isinstance(cases, list) or not cases:
        raise ConfigError("theory config needs a nonempty 'cases' list")
    parsed_cases = []
    for i, c in enumerate(cases):
        context = f"cases[{i}]"
        _check_keys(c, ["case", "grid", "lambda", "tau", "n", "m", "m_prime",
                        "compare_matched", "eta_override"], context)
        kind = _get(c, "case", str, context, required=True)
        if kind in ("b", "c"):
            grid = c.get("grid")
            if (not isinstance(grid, list) or len(grid) < 1
                    or not all(isinstance(g, int) and not isinstance(g, bool)
                               and g > 0 for g in grid)):
                raise ConfigError(f"{context} needs a positive integer 'grid'")
            parsed_cases.append({
                "case": kind,
                "grid": grid,
                "lambda": _get(c, "lambda", float, context,
                               default=1.0 if kind == "b" else 0.5),
                "eta_override": _get(c, "eta_override", float, context,
                                     default=None),
            })
        elif kind == "a":
            parsed_cases.append({
                "case": "a",
                "n": _get(c, "n", int, context, required=True),
                "m": _get(c, "m", int, context, required=True),
                "m_prime": _get(c, "m_prime", int, context, required=True),
                "lambda": _get(c, "lambda", float, context, default=1.0 / 3.0),
                "tau": _get(c, "tau", float, context, default=0.5),
                "compare_matched": bool(c.get("compare_matched", True)),
            })
        else:
            raise ConfigError(f"{context}: case must be 'a', 'b', or 'c'")
    return {
        "seed": seed,
        "replications": _get(d, "replications", int, "theory config",
                             default=20),
        "delta0": _get(d, "delta0", float, "theory config", default=1.0),
        "dim": _get(obj, "dim", int, "objective", default=20),
        "mu": _get(obj, "mu", float, "objective", default=0.5),
        "l_smooth": _get(obj, "l_smooth", float, "objective", default=5.0),
        "spec": OracleSpec(
            sigma2=_get(oracle, "sigma2", float, "oracle", default=1.0),
            epsilon=_get(oracle, "epsilon", float, "oracle", default=0.05),
            nu=_get(oracle, "nu", float, "oracle", default=1.0e4),
        ),
        "cases": parsed_cases,
        "checks_enabled": bool(checks.get("enabled", True)),
        "check_points": _get(checks, "points", int, "checks", default=5),
        "check_draws": _get(checks, "draws", int, "checks", default=20000),
        "drift_steps": _get(checks, "drift_steps", int, "checks", default=1000),
        "drift_window": _get(checks, "drift_window", int, "checks", default=10),
        "drift_eta": _get(checks, "drift_eta", float, "checks", default=0.02),
        "lsm_events": _get(checks, "lsm_events", int, "checks", default=5),
        "lsm_instances": _get(checks, "lsm_instances", int, "checks",
                              default=40),
        "slope_range": [float(slope_range[0]), float(slope_range[1])],
        "stall_min_gap": _get(d, "stall_min_gap", float, "theory config",
                              default=0.2),
        "matched_max_gap": _get(d, "matched_max_gap", float, "theory config",
                                default=0.01),
    }


# -- output helpers --------------------------------------------------------


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _sanitize(obj):
    """Make JSON output round-trip friendly (inf/nan become strings)."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if v != v:
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _map_ordered(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# -- subcommands -----------------------------------------------------------


def cmd_synth(args):
    cfg = parse_synth_config(_load_json(args.config), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    data = make_openset_mixture(cfg)
    export_csv(data, out / "dataset.csv")
    _write_json(out / "config.json", vars(cfg).copy())
    report.render_dataset_preview(data, out / "preview.png")
    _write_runlog(out, started)
    log.info("wrote %s rows to %s", sum(
        len(a) for a in (data.s_x, data.u_x, data.v_x, data.t_x)), out)
    return 0


def cmd_train(args):
    cfg, mode, want_dim = parse_train_config(_load_json(args.config), args.seed)
    data = import_csv(args.data)
    if want_dim is not None and want_dim != data.dim:
        raise ConfigError(
            f"config expects dim {want_dim} but the dataset has dim {data.dim}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    if mode == "labeled_only":
        result = baseline_labeled_only(cfg, data)
    else:
        result = train(cfg, data, threads=args.threads)
    result.log.to_csv(out / "metrics.csv")
    save_params(result.params, out / "params.bin", seed=cfg.seed)
    for sel in result.selections:
        write_selection_csv(
            out / f"selection_epoch{sel.epoch:04d}.csv", sel, data.u_idx,
            data.u_truth, data.u_planted,
        )
    final_selection = result.selections[-1] if result.selections else None
    eval_report = evaluate(result.params, data, cfg.rho_conf, final_selection)
    confusion_to_csv(eval_report.confusion, data.k_seen, out / "confusion.csv")
    echo = _canonical_train_echo(cfg, mode)
    _write_json(out / "config.json", echo)
    last = result.log.records[-1] if result.log.records else None
    summary = {
        "config": echo,
        "epochs_run": len(result.log.records),
        "selection_events": len(result.selections),
        "final": _sanitize(vars(last)) if last else None,
        "evaluation": _sanitize(eval_report.to_dict()),
    }
    _write_json(out / "summary.json", summary)
    report.render_train_curves(result.log.records, out / "training_curves.png")
    report.render_selection_curves(result.log.records,
                                   out / "selection_curves.png")
    if final_selection is not None:
        report.render_selection_scores(final_selection, data.u_planted,
                                       out / "selection_scores.png")
    _write_runlog(out, started)
    if last is not None:
        log.info("final id accuracy %.4f, auroc %.4f", last.id_acc, last.auroc)
    return 0


def _theory_rows(result):
    scn = result.scenario
    return [
        [scn.case, scn.n, scn.m, scn.m_prime, repr(scn.lam), repr(scn.tau),
         repr(result.eta), r, repr(float(result.final_gaps[r]))]
        for r in range(len(result.final_gaps))
    ]


def cmd_theory(args):
    cfg = parse_theory_config(_load_json(args.config), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rows = []
    case_reports = {}
    failures = []
    figures = []

    def scenario_for(case, lam, tau, n, m, m_prime, tag, eta_override=None):
        return TheoryScenario(
            case=case, dim=cfg["dim"], mu=cfg["mu"], l_smooth=cfg["l_smooth"],
            spec=cfg["spec"], lam=lam, tau=tau, n=n, m=m, m_prime=m_prime,
            replications=cfg["replications"],
            seed=derive_seed(cfg["seed"], {"a": 1, "b": 2, "c": 3}[case], tag),
            delta0=cfg["delta0"], eta_override=eta_override,
        )

    for case_cfg in cfg["cases"]:
        kind = case_cfg["case"]
        if kind in ("b", "c"):
            lam = case_cfg["lambda"]
            override = case_cfg["eta_override"]
            scenarios = []
            for total in case_cfg["grid"]:
                if kind == "b":
                    scenarios.append(scenario_for("b", 1.0, 1.0, total, 0, 0,
                                                  total, override))
                else:
                    half = total // 2
                    scenarios.append(scenario_for("c", lam, 1.0, total - half,
                                                  half, 0, total, override))
            results = _map_ordered(run_sgd_mixture, scenarios, args.threads)
            for res in results:
                rows.extend(_theory_rows(res))
            totals = [s.steps for s in scenarios]
            gaps = [r.final_gap for r in results]
            entry = {
                "grid": totals,
                "final_gaps": gaps,
                "etas": [r.eta for r in results],
                "diverged": int(sum(r.diverged.sum() for r in results)),
            }
            # the gap bound tracks the log step rule, not overridden steps
            if override is None and cfg["spec"].sigma2 > 0:
                bounds = [erb_bound(t, cfg["mu"], cfg["l_smooth"],
                                    cfg["spec"].sigma2, cfg["delta0"])
                          for t in totals]
                entry["bounds"] = bounds
                entry["bound_ok"] = all(
                    g <= 3.0 * b for g, b in zip(gaps, bounds))
            else:
                bounds = None
                entry["bound_ok"] = True
            if len(totals) >= 4 and max(totals) / min(totals) >= 100:
                slope, intercept = fit_rate(totals, gaps)
                lo, hi = cfg["slope_range"]
                entry.update({
                    "slope": slope,
                    "slope_range": [lo, hi],
                    "slope_ok": lo <= slope <= hi,
                })
                figpath = out / f"theory_case_{kind}.png"
                report.render_rate_fit(totals, gaps, slope, intercept, bounds,
                                       f"case ({kind}) final gap vs budget",
                                       figpath)
                figures.append(figpath.name)
                if not entry["slope_ok"]:
                    failures.append(f"case {kind}: slope {slope:.3f} outside "
                                    f"[{lo}, {hi}]")
            if not entry["bound_ok"]:
                failures.append(f"case {kind}: a final gap exceeded 3x bound")
            if entry["diverged"]:
                failures.append(f"case {kind}: {entry['diverged']} divergent "
                                "replications")
            case_reports[kind] = entry
        else:
            lam, tau = case_cfg["lambda"], case_cfg["tau"]
            scn_a = scenario_for("a", lam, tau, case_cfg["n"], case_cfg["m"],
                                 case_cfg["m_prime"], 0)
            res_a = run_sgd_mixture(scn_a)
            rows.extend(_theory_rows(res_a))
            entry = {
                "n": scn_a.n, "m": scn_a.m, "m_prime": scn_a.m_prime,
                "lambda": lam, "tau": tau, "eta": res_a.eta,
                "final_gap": res_a.final_gap,
                "stall_min_gap": cfg["stall_min_gap"],
                "stalled": res_a.final_gap >= cfg["stall_min_gap"] * cfg["delta0"],
                "diverged": int(res_a.diverged.sum()),
            }
            if not entry["stalled"]:
                failures.append("case a: run did not stall (gap "
                                f"{res_a.final_gap:.4f})")
            named_runs = [("case a (with unfriendly)", res_a)]
            if case_cfg["compare_matched"]:
                total = scn_a.steps
                half = total // 2
                scn_c = scenario_for("c", 0.5, 1.0, total - half, half, 0,
                                     derive_seed(7, total))
                res_c = run_sgd_mixture(scn_c)
                rows.extend(_theory_rows(res_c))
                entry["matched_c_gap"] = res_c.final_gap
                entry["matched_max_gap"] = cfg["matched_max_gap"]
                entry["matched_ok"] = (
                    res_c.final_gap <= cfg["matched_max_gap"] * cfg["delta0"]
                )
                if not entry["matched_ok"]:
                    failures.append("case a: matched case-c run did not reach "
                                    f"{cfg['matched_max_gap']} (gap "
                                    f"{res_c.final_gap:.5f})")
                named_runs.append(("case c (matched budget)", res_c))
            figpath = out / "trajectories.png"
            report.render_trajectories(named_runs, figpath)
            figures.append(figpath.name)
            case_reports["a"] = entry

    check_reports = []
    if cfg["checks_enabled"]:
        check_reports = run_proof_checks(cfg)
        for rep in check_reports:
            if not rep.passed:
                failures.append(f"check failed: {rep.name}")

    identity = _special_case_identity(cfg)
    if not identity["identity_ok"]:
        failures.append("special-case step identity violated")

    with open(out / "theory_runs.csv", "w", newline="") as f:
        import csv as _csv

        writer = _csv.writer(f)
        writer.writerow(["case", "n", "m", "m_prime", "lambda", "tau", "eta",
                         "replication", "final_gap"])
        writer.writerows(rows)
    report_doc = {
        "cases": case_reports,
        "checks": [r.to_dict() for r in check_reports],
        "identities": identity,
        "figures": figures,
        "failures": failures,
        "pass": not failures,
    }
    _write_json(out / "theory_report.json", _sanitize(report_doc))
    _write_runlog(out, started)
    if failures:
        for item in failures:
            log.warning("%s", item)
        return 1
    log.info("all theory checks passed")
    return 0


def _special_case_identity(cfg):
    """Budget at which the case-a step equals 2/(budget mu), as an identity."""
    spec = cfg["spec"]
    lam, tau = 1.0 / 3.0, 0.5
    budget = special_case_budget(spec, lam, tau, cfg["mu"], cfg["l_smooth"])
    coeff = (1.0 - lam) * (tau * spec.epsilon + (1.0 - tau) * spec.nu)
    eta_a = 1.0 / (coeff * cfg["l_smooth"])
    eta_special = 2.0 / (budget * cfg["mu"])
    ok = abs(eta_a - eta_special) <= 1e-12 * max(abs(eta_a), abs(eta_special))
    return {"budget": budget, "eta_case_a": eta_a,
            "eta_special": eta_special, "identity_ok": ok}


def run_proof_checks(cfg):
    """Descent, variance, drift, selection-loss-bound, and spectrum checks."""
    from .theory import QuadraticObjective

    reports = []
    objective = QuadraticObjective.build(
        cfg["dim"], cfg["mu"], cfg["l_smooth"],
        seed=derive_seed(cfg["seed"], 11),
    )
    lmin, lmax = measured_extremes(objective)
    spectrum_ok = (abs(lmin - cfg["mu"]) <= 1e-8
                   and abs(lmax - cfg["l_smooth"]) <= 1e-8)
    reports.append(InequalityReport(
        name="spectrum_constants",
        passed=spectrum_ok,
        margin=-max(abs(lmin - cfg["mu"]), abs(lmax - cfg["l_smooth"])),
        stderr=0.0,
        detail={"measured_min": lmin, "measured_max": lmax},
    ))
    rng = np.random.default_rng(derive_seed(cfg["seed"], 17))
    for i in range(cfg["check_points"]):
        theta = objective.theta_star + rng.standard_normal(cfg["dim"])
        eta = rng.uniform(0.1, 1.0) / cfg["l_smooth"]
        lam = rng.uniform(0.2, 1.0)
        tau = rng.uniform(0.0, 1.0)
        point_seed = derive_seed(cfg["seed"], 19, i)
        descent = check_descent_step(objective, cfg["spec"], lam, tau, theta,
                                     eta, cfg["check_draws"], point_seed)
        descent.name = f"descent_step[{i}]"
        variance = check_mixture_variance_bound(objective, cfg["spec"], lam,
                                                tau, theta,
                                                cfg["check_draws"], point_seed)
        variance.name = f"mixture_variance_bound[{i}]"
        reports.extend([descent, variance])
    theta0 = equal_share_theta0(objective, cfg["delta0"])
    _, grads = record_gd_trajectory(objective, theta0, cfg["drift_eta"],
                                    cfg["drift_steps"])
    reports.append(check_drift_bound(grads, cfg["drift_eta"], cfg["l_smooth"],
                                     cfg["drift_window"]))
    for i in range(cfg["lsm_events"]):
        objs, theta, g_bar, rho = random_lsm_event(
            cfg["dim"], cfg["mu"], cfg["l_smooth"], cfg["lsm_instances"],
            derive_seed(cfg["seed"], 23, i),
        )
        rep = check_lsm_bound(objs, theta, rho, g_bar, cfg["mu"])
        rep.name = f"lsm_loss_bound[{i}]"
        reports.append(rep)
    return reports


def _write_runlog(out, started):
    with open(Path(out) / "run.log", "w") as f:
        f.write(f"wall_seconds: {time.perf_counter() - started:.3f}\n")


# -- entry point --------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", required=True, help="JSON config path")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for parallel-safe maps")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress informational logging")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="openset-lab",
        description="Desk-scale open-set semi-supervised learning laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p_synth)
    p_train = sub.add_parser("train", help="train on a dataset CSV")
    _add_common(p_train)
    p_train.add_argument("--data", required=True, help="dataset CSV path")
    p_theory = sub.add_parser("theory", help="run the convergence test bench")
    _add_common(p_theory)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    handler = {"synth": cmd_synth, "train": cmd_train, "theory": cmd_theory}
    try:
        return handler[args.command](args)
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
