"""Command-line surface: switchtrack <subcommand>."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..bench import ElectricityConfig, FamilyConfig, generate_family, ingest_electricity
from ..bench.electricity import electricity_loss_matrix, expert_forecasts
from ..certificate import (
    constant_eta_certificate,
    train_aligned_certificate,
    weighted_certificate,
)
from ..controller import load_policy, param_specs
from ..core import (
    DEFAULT_BOUNDS,
    load_losses_csv,
    load_path_csv,
    load_trace_jsonl,
    save_losses_csv,
    save_path_csv,
)
from ..oracle import switching_oracle_dp
from .config import load_config
from .suite import run_electricity, run_suite, train_family_policy


def _parse_knobs(pairs):
    knobs = {}
    for pair in pairs or []:
        key, _, raw = pair.partition("=")
        try:
            knobs[key] = int(raw)
        except ValueError:
            try:
                knobs[key] = float(raw)
            except ValueError:
                knobs[key] = raw
    return knobs


def cmd_gen(args) -> int:
    cfg = FamilyConfig(args.family, args.T, args.K, args.seed, _parse_knobs(args.knob))
    seq = generate_family(cfg)
    save_losses_csv(seq.losses, args.out)
    if args.path_out:
        save_path_csv(seq.path, args.path_out)
    print(f"wrote {args.out} ({seq.losses.T} x {seq.losses.K})")
    return 0


def cmd_oracle(args) -> int:
    losses = load_losses_csv(args.losses)
    result = switching_oracle_dp(losses, args.budget)
    print(repr(result.value))
    if args.path_out:
        save_path_csv(result.path, args.path_out)
    return 0


def cmd_certify(args) -> int:
    trace = load_trace_jsonl(args.trace)
    losses = load_losses_csv(args.losses)
    path = load_path_csv(args.path)
    if args.kind == "weighted":
        report = weighted_certificate(trace, losses, path, final_eta=args.eta)
    elif args.kind == "train-aligned":
        report = train_aligned_certificate(trace, losses, path,
                                           DEFAULT_BOUNDS.rho_max, args.eta)
    else:
        eta = args.eta if args.eta else float(trace.etas[0])
        report = constant_eta_certificate(trace, losses, path, eta)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.holds else 1


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if cfg.get("mode") == "electricity":
        result = run_electricity(cfg, out_dir=args.out)
        for budget, method, norm, _slack in result.rows:
            print(f"S={budget} {method}: dynreg/T = {norm:.6f}")
        for budget, ok in result.orderings.items():
            print(f"S={budget} ordering learned<=genshare<=fixed_share: {ok} (flag only)")
        return 0
    result = run_suite(cfg, out_dir=args.out)
    for (family, method), agg in sorted(result.aggregates.items()):
        print(f"{family} {method}: {agg['mean']:.3f} ± {agg['std']:.3f} (n={agg['n']})")
    return 0


def cmd_train(args) -> int:
    from ..controller import save_policy

    cfg = load_config(args.config)
    family = cfg.get("family", "switch")
    params, history = train_family_policy(dict(cfg), family)
    save_policy(params, args.out)
    print(f"trained on {family}: objective {history['objective'][0]:.3f} -> "
          f"{history['objective'][-1]:.3f}; saved {args.out}")
    return 0


def cmd_inspect_policy(args) -> int:
    params = load_policy(args.policy)
    cfg = params.config
    print(f"d_in={cfg.d_in} d_model={cfg.d_model} n_layers={cfg.n_layers} "
          f"n_heads={cfg.n_heads} d_ff={cfg.d_ff} use_eta_head={cfg.use_eta_head}")
    print(f"parameters: {params.n_params()}")
    for name, _shape in param_specs(cfg):
        t = params.tensors[name]
        print(f"  {name}: shape {t.shape}, l2 {np.linalg.norm(t):.4f}")
    return 0


def cmd_ingest(args) -> int:
    cfg = ElectricityConfig(keep_last=args.keep_last)
    ingested = ingest_electricity(args.source, cfg)
    np.savez(args.out, values=ingested.values, split_index=ingested.split_index)
    print(f"{len(ingested.values)} points (skipped {ingested.skipped_missing} missing, "
          f"{ingested.skipped_malformed} malformed); split at {ingested.split_index}")
    return 0


def cmd_experts(args) -> int:
    data = np.load(args.series)
    series, split_index = data["values"], int(data["split_index"])
    cfg = ElectricityConfig()
    forecasts = expert_forecasts(series, cfg)
    losses, meta = electricity_loss_matrix(series, forecasts, cfg, split_index)
    save_losses_csv(losses, args.out)
    print(f"wrote {args.out} ({losses.T} x {losses.K}); clip scale {meta['clip_scale']:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchtrack")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic loss matrix")
    p.add_argument("--family", required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--path-out")
    p.add_argument("--knob", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("oracle", help="exact S-switch oracle on a loss CSV")
    p.add_argument("losses")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--path-out")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("certify", help="evaluate a regret certificate on a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--losses", required=True)
    p.add_argument("--path", required=True)
    p.add_argument("--kind", choices=["constant", "weighted", "train-aligned"],
                   default="constant")
    p.add_argument("--eta", type=float)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("run", help="run a benchmark suite from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("train", help="train the update policy from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("inspect-policy", help="show a saved policy's dimensions")
    p.add_argument("policy")
    p.set_defaults(fn=cmd_inspect_policy)

    p = sub.add_parser("ingest", help="UCI electricity text -> series binary")
    p.add_argument("source")
    p.add_argument("--out", required=True)
    p.add_argument("--keep-last", type=int, default=ElectricityConfig.keep_last)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("experts", help="series binary -> expert loss-matrix CSV")
    p.add_argument("series")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_experts)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
