"""Experiment runner: generate sequences, run every method on identical loss
matrices, score against a single cached comparator, and verify certificates.

A certificate violation is a hard failure: the offending run is dumped and
the suite aborts, since the pathwise bound is supposed to hold on every
admissible run.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..backbone import default_eta, make_baseline, run_online
from ..bench import (
    ElectricityConfig,
    FamilyConfig,
    electricity_loss_matrix,
    expert_forecasts,
    generate_family,
    heavytail_grid,
    ingest_electricity,
)
from ..certificate import constant_eta_certificate, train_aligned_certificate
from ..controller import (
    ControllerConfig,
    TrainConfig,
    TrainSequence,
    make_learned_controller,
    train_controller,
)
from ..core import (
    DEFAULT_BOUNDS,
    BoundedLossMatrix,
    save_losses_csv,
    save_trace_jsonl,
)
from ..errors import CertificateViolation, ConfigError
from ..oracle import path_cost, switching_oracle_dp
from .stats import PairedStats, paired_stats

ALL_METHODS = ("hedge", "fixed_share", "genshare_heuristic", "learned")

DEFAULT_SUITE = {
    "mode": "synthetic",
    "families": ["switch"],
    "methods": list(ALL_METHODS),
    "T": 600,
    "K": 32,
    "N": 20,
    "S": 10,
    "master_seed": 0,
    "workers": 4,
    "comparator": "oracle",       # or "ground_truth" for the large-K stress
    "eta": None,                   # default: sqrt(8 ln K / T)
    "fs_rho": None,                # default: S / (T - 1)
    "train_sequences": 8,
    "epochs": 30,
    "batch_size": 64,
    "step": 1e-2,
    "lambda_sw": 1.0,
    "lambda_wd": 1e-4,
    "window": 10,
    "d_model": 32,
    "n_layers": 1,
    "n_heads": 2,
    "d_ff": 64,
    "budgets": [5, 10, 20],       # electricity mode
}

TRAIN_SEED_OFFSET = 100_000


@dataclass(frozen=True)
class SequenceScore:
    family: str
    seed: int
    method: str
    dyn_regret: float
    norm_regret: float
    cert_slack: float
    runtime_s: float


@dataclass
class SuiteResult:
    scores: list
    aggregates: dict          # (family, method) -> {"mean":, "std":, "n":}
    pairs: dict               # (family, method_a, method_b) -> PairedStats
    comparator_values: dict   # (family, seed) -> float
    config: dict


def _merged(config: dict) -> dict:
    cfg = dict(DEFAULT_SUITE)
    cfg.update(config or {})
    return cfg


def _suite_eta(cfg: dict) -> float:
    return cfg["eta"] if cfg["eta"] else default_eta(cfg["T"], cfg["K"])


def _fs_rho(cfg: dict) -> float:
    if cfg["fs_rho"]:
        return float(cfg["fs_rho"])
    rho = cfg["S"] / max(cfg["T"] - 1, 1)
    return float(min(max(rho, 1e-4), 0.9 * DEFAULT_BOUNDS.rho_max))


def _train_config(cfg: dict, d_in: int) -> TrainConfig:
    arch = ControllerConfig(d_in=d_in, d_model=cfg["d_model"], n_layers=cfg["n_layers"],
                            n_heads=cfg["n_heads"], d_ff=cfg["d_ff"])
    return TrainConfig(arch=arch, window=cfg["window"], epochs=cfg["epochs"],
                       batch_size=cfg["batch_size"], step=cfg["step"],
                       lambda_sw=cfg["lambda_sw"], lambda_wd=cfg["lambda_wd"],
                       seed=cfg["master_seed"])


def train_family_policy(cfg: dict, family: str):
    """Train one update policy on held-out sequences of a family (training
    seeds are disjoint from evaluation seeds by a fixed offset)."""
    seqs = []
    for i in range(cfg["train_sequences"]):
        fam_cfg = FamilyConfig(family, cfg["T"], cfg["K"],
                               cfg["master_seed"] + TRAIN_SEED_OFFSET + i,
                               dict(cfg.get("knobs", {})))
        seq = generate_family(fam_cfg)
        oracle = switching_oracle_dp(seq.losses, cfg["S"])
        seqs.append(TrainSequence(seq.losses, oracle.path, seq.side_info))
    d_in = 9 if seqs[0].side_info is not None else 8
    params, history = train_controller(seqs, _train_config(cfg, d_in))
    return params, history


def _method_controller(method: str, cfg: dict, policy, side_info):
    eta = _suite_eta(cfg)
    if method == "hedge":
        return make_baseline("hedge", eta=eta)
    if method == "fixed_share":
        return make_baseline("fixed_share", eta=eta, rho=_fs_rho(cfg))
    if method == "genshare_heuristic":
        return make_baseline("genshare_heuristic", eta=eta, window=cfg["window"])
    if method == "learned":
        if policy is None:
            raise ConfigError("learned method requested but no trained policy available")
        return make_learned_controller(K=cfg["K"], params=policy, eta=eta,
                                       window=cfg["window"], side_info=side_info)
    raise ConfigError(f"unknown method {method!r}")


def _dump_failure(out_dir, family, seed, method, trace, losses) -> str:
    out = Path(out_dir) if out_dir else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"certfail_{family}_{seed}_{method}"
    save_trace_jsonl(trace, f"{stem}.trace.jsonl")
    save_losses_csv(losses, f"{stem}.losses.csv")
    return str(stem)


def _evaluate_sequence(cfg: dict, family: str, seed_idx: int, policy, out_dir):
    fam_cfg = FamilyConfig(family, cfg["T"], cfg["K"], cfg["master_seed"] + seed_idx,
                           dict(cfg.get("knobs", {})))
    seq = generate_family(fam_cfg)
    eta = _suite_eta(cfg)

    if cfg["comparator"] == "ground_truth":
        comp_path = seq.path
        comp_value = path_cost(seq.losses, comp_path)
    else:
        oracle = switching_oracle_dp(seq.losses, cfg["S"])
        comp_path, comp_value = oracle.path, oracle.value

    scores = []
    for method in cfg["methods"]:
        controller = _method_controller(method, cfg, policy, seq.side_info)
        t0 = time.perf_counter()
        trace = run_online(seq.losses, controller)
        elapsed = time.perf_counter() - t0
        report = constant_eta_certificate(trace, seq.losses, comp_path, eta)
        if not report.holds:
            where = _dump_failure(out_dir, family, fam_cfg.seed, method, trace, seq.losses)
            raise CertificateViolation(
                f"certificate violated ({family}, seed {fam_cfg.seed}, {method}): "
                f"slack {report.slack}; run dumped at {where}")
        if method == "learned" and trace.has_raw_policy():
            aligned = train_aligned_certificate(trace, seq.losses, comp_path,
                                                DEFAULT_BOUNDS.rho_max, eta)
            if not aligned.holds:
                where = _dump_failure(out_dir, family, fam_cfg.seed, method, trace, seq.losses)
                raise CertificateViolation(
                    f"train-aligned certificate violated ({family}, seed {fam_cfg.seed}): "
                    f"slack {aligned.slack}; run dumped at {where}")
        regret = float(trace.incurred.sum()) - comp_value
        scores.append(SequenceScore(family, fam_cfg.seed, method, regret,
                                    regret / cfg["T"], report.slack, elapsed))
    return (family, seed_idx), comp_value, scores


def run_suite(config: dict | None = None, out_dir=None) -> SuiteResult:
    cfg = _merged(config)
    if cfg["mode"] == "electricity":
        raise ConfigError("use run_electricity for electricity configs")

    policies = {}
    if "learned" in cfg["methods"]:
        for family in cfg["families"]:
            policies[family], _ = train_family_policy(cfg, family)

    items = [(family, i) for family in cfg["families"] for i in range(cfg["N"])]
    results = []
    with ThreadPoolExecutor(max_workers=int(cfg["workers"])) as pool:
        futures = [pool.submit(_evaluate_sequence, cfg, family, i,
                               policies.get(family), out_dir)
                   for family, i in items]
        for fut in futures:
            results.append(fut.result())

    scores = [s for _key, _cv, seq_scores in results for s in seq_scores]
    comparator_values = {key: cv for key, cv, _ in results}

    aggregates = {}
    by_method = {}
    for family in cfg["families"]:
        for method in cfg["methods"]:
            vals = np.array([s.dyn_regret for s in scores
                             if s.family == family and s.method == method])
            aggregates[(family, method)] = {
                "mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "n": int(vals.size)}
            by_method[(family, method)] = vals

    pairs = {}
    if cfg["N"] >= 2:
        for family in cfg["families"]:
            for m1 in cfg["methods"]:
                for m2 in cfg["methods"]:
                    if m1 == m2:
                        continue
                    pairs[(family, m1, m2)] = paired_stats(by_method[(family, m1)],
                                                           by_method[(family, m2)])

    result = SuiteResult(scores, aggregates, pairs, comparator_values, cfg)
    if out_dir is not None:
        from .reports import emit_reports
        emit_reports(result, out_dir)
    return result


def run_heavytail_suite(config: dict | None = None, out_dir=None):
    """Improvement grid over (df, jump_prob): mean of
    genshare_heuristic regret minus learned regret, per cell."""
    cfg = _merged(config)
    cells = heavytail_grid(cfg["T"], cfg["K"], cfg["master_seed"])
    grid = {}
    for cell in cells:
        cell_cfg = dict(cfg)
        cell_cfg.update({"families": ["heavytail"], "knobs": cell.knobs,
                         "methods": ["genshare_heuristic", "learned"]})
        res = run_suite(cell_cfg, out_dir=None)
        ps = res.pairs.get(("heavytail", "learned", "genshare_heuristic"))
        improvement = ps.mean_improvement if ps else (
            res.aggregates[("heavytail", "genshare_heuristic")]["mean"]
            - res.aggregates[("heavytail", "learned")]["mean"])
        grid[(cell.knobs["df"], cell.knobs["jump_prob"])] = improvement
    if out_dir is not None:
        from .reports import improvement_grid_markdown
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "heavytail_grid.md").write_text(improvement_grid_markdown(grid))
    return grid


# ---------------------------------------------------------------------------
# Electricity mode: ingest -> experts -> losses -> evaluate per switch budget.
# ---------------------------------------------------------------------------

@dataclass
class ElectricityResult:
    rows: list                # (budget, method, norm_regret, cert_slack)
    orderings: dict           # budget -> bool flag: learned <= genshare <= fixed_share
    meta: dict


def run_electricity(config: dict, out_dir=None) -> ElectricityResult:
    cfg = _merged(config)
    if "source" not in cfg:
        raise ConfigError("electricity mode needs 'source' pointing at the UCI file")
    ecfg = ElectricityConfig(
        keep_last=int(cfg.get("keep_last", ElectricityConfig.keep_last)),
        burn_in=int(cfg.get("burn_in", ElectricityConfig.burn_in)),
        rolling_window=int(cfg.get("rolling_window", ElectricityConfig.rolling_window)),
    )
    ingested = ingest_electricity(cfg["source"], ecfg)
    forecasts = expert_forecasts(ingested.values, ecfg)
    losses, meta = electricity_loss_matrix(ingested.values, forecasts, ecfg,
                                           ingested.split_index)
    split_row = meta["test_start_row"]
    train_losses = BoundedLossMatrix(losses.entries[:split_row])
    test_losses = BoundedLossMatrix(losses.entries[split_row:])
    K = losses.K
    T_test = test_losses.T
    eta = cfg["eta"] if cfg["eta"] else default_eta(T_test, K)

    rows, orderings = [], {}
    for budget in cfg["budgets"]:
        train_oracle = switching_oracle_dp(train_losses, budget)
        train_cfg = dict(cfg)
        train_cfg.update({"K": K})
        params, _ = train_controller(
            [TrainSequence(train_losses, train_oracle.path)],
            _train_config(train_cfg, d_in=8))
        oracle = switching_oracle_dp(test_losses, budget)

        per_method = {}
        for method in cfg["methods"]:
            eval_cfg = dict(cfg)
            eval_cfg.update({"K": K, "T": T_test, "S": budget, "eta": eta})
            controller = _method_controller(method, eval_cfg, params, None)
            trace = run_online(test_losses, controller)
            report = constant_eta_certificate(trace, test_losses, oracle.path, eta)
            if not report.holds:
                where = _dump_failure(out_dir, "electricity", budget, method,
                                      trace, test_losses)
                raise CertificateViolation(
                    f"certificate violated (electricity, S={budget}, {method}); "
                    f"run dumped at {where}")
            regret = float(trace.incurred.sum()) - oracle.value
            norm = regret / T_test
            per_method[method] = norm
            rows.append((budget, method, norm, report.slack))
        ordering = True
        chain = [m for m in ("learned", "genshare_heuristic", "fixed_share")
                 if m in per_method]
        for a, b in zip(chain, chain[1:]):
            ordering = ordering and per_method[a] <= per_method[b]
        orderings[budget] = ordering

    meta.update({"T_test": T_test, "K": K, "eta": eta,
                 "skipped_missing": ingested.skipped_missing,
                 "skipped_malformed": ingested.skipped_malformed})
    result = ElectricityResult(rows, orderings, meta)
    if out_dir is not None:
        from .reports import electricity_markdown
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "electricity.md").write_text(electricity_markdown(result))
    return result
