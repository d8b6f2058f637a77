"""Command-line interface.

Subcommands:
    generate   sample instances from a distribution into a JSONL file
    solve      add exact values to instances with the enumeration oracle
    train      run a trainer (cur | dqn | mc) from an experiment config
    eval       score a policy against a solved dataset, append a CSV row
    inspect    print per-action values and co-optimal flags for one instance

All commands exit 0 on success and 1 on any error. ``MCNLEARN_OUT_DIR``
and ``MCNLEARN_THREADS`` override the output directory and worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mio
from .curriculum import (
    CurriculumTrainConfig,
    run_curriculum,
    sample_instance,
)
from .evalbench import (
    evaluate_policy,
    greedy_policy,
    inspect_action_values,
    oracle_policy,
    random_policy,
)
from .game import Player, current_player
from .oracle import minimax_value
from .rl import multil_dqn_train, multil_mc_train
from .seeding import derive_seed

CURVE_COLUMNS_CUR = ["stage", "update", "train_mse", "val_mse", "wall_ms"]
CURVE_COLUMNS_RL = ["update", "loss", "epsilon", "episodes_seen"]
REPORT_COLUMNS = [
    "dataset_id", "policy", "n_instances", "n_excluded", "eta", "zeta", "mean_time_s", "seed",
]


def _threads_default() -> int:
    return int(os.environ.get("MCNLEARN_THREADS", "1"))


def _out_dir(value: str) -> Path:
    override = os.environ.get("MCNLEARN_OUT_DIR")
    return Path(override) if override else Path(value)


def cmd_generate(args) -> int:
    if args.config:
        cfg = mio.load_experiment_config(args.config)
        dist = cfg.distribution
        seed = cfg.seed if args.seed is None else args.seed
    else:
        dist = mio.DISTRIBUTION_PRESETS[args.preset]
        seed = args.seed if args.seed is not None else 0
    records = []
    for i in range(args.count):
        rng = np.random.default_rng(derive_seed(seed, "instance", i))
        state = sample_instance(dist, rng)
        records.append(mio.InstanceRecord.from_state(f"{args.prefix}{i:06d}", state,
                                                     variant=dist.variant))
    mio.write_instances(args.out, records)
    print(f"wrote {len(records)} instances to {args.out}")
    return 0


def cmd_solve(args) -> int:
    records = mio.read_instances(args.infile)
    solved, skipped, kept = [], 0, 0
    for rec in records:
        state = rec.to_state()
        total_budget = sum(rec.budgets)
        if state.graph.n > args.max_n or total_budget > args.max_budget:
            print(f"warning: {rec.id}: over oracle bounds "
                  f"(n={state.graph.n}, B={total_budget}); skipped", file=sys.stderr)
            skipped += 1
            solved.append(rec)
            continue
        if rec.exact_value is not None and not args.force:
            kept += 1
            solved.append(rec)
            continue
        t0 = time.perf_counter()
        result = minimax_value(state)
        dt = time.perf_counter() - t0
        solved.append(dataclasses.replace(
            rec, exact_value=result.value, action_values=dict(result.action_values)))
        print(f"{rec.id}: value={result.value} time={dt:.4f}s", file=sys.stderr)
    mio.write_instances(args.out, solved)
    print(f"solved {len(records) - skipped - kept} instances "
          f"({kept} kept, {skipped} skipped) -> {args.out}")
    return 0


def _train_cur(cfg: mio.ExperimentConfig, out: Path, resume: bool, threads: int) -> list[Path]:
    from .curriculum import ExpertList

    experts_box = ExpertList()
    partial = out / "experts.partial.ckpt"
    if resume and partial.exists():
        experts_box, _ = mio.load_expert_list(partial)
        print(f"resuming with {len(experts_box)} experts from {partial}")
    train_cfg = dataclasses.replace(cfg.curriculum, threads=threads)

    def log(summary: dict) -> None:
        # experts_box grows in place as stages finish; checkpoint it so an
        # interrupted run can resume.
        print(f"stage {summary['stage']}: updates={summary['updates']} "
              f"best_val_mse={summary['best_val_mse']:.5f} "
              f"(data {summary['dataset_s']}s, train {summary['train_s']}s)")
        mio.save_expert_list(partial, experts_box)

    result = run_curriculum(cfg.distribution, cfg.model, train_cfg, cfg.seed,
                            existing=experts_box, log=log)
    ckpt = out / "experts.ckpt"
    mio.save_expert_list(ckpt, result.experts,
                         meta={"stages": [st.label() for st in result.stages]})
    curve = out / "curves_cur.csv"
    mio.write_csv(curve, result.history, CURVE_COLUMNS_CUR)
    print(f"trained {len(result.experts)} experts, {result.total_updates} updates")
    return [ckpt]


def _train_rl(cfg: mio.ExperimentConfig, out: Path, mode: str) -> list[Path]:
    trainer = multil_dqn_train if mode == "dqn" else multil_mc_train
    run_cfg = dataclasses.replace(cfg.rl, seed=derive_seed(cfg.seed, mode))
    result = trainer(run_cfg, cfg.distribution, cfg.model)
    ckpt = out / f"net_{mode}.ckpt"
    mio.save_network(ckpt, result.net, meta={"mode": mode, "episodes": result.episodes,
                                             "updates": result.updates})
    mio.write_csv(out / f"curves_{mode}.csv", result.curve, CURVE_COLUMNS_RL)
    print(f"{mode}: {result.episodes} episodes, {result.updates} updates")
    return [ckpt]


def cmd_train(args) -> int:
    cfg = mio.load_experiment_config(args.config)
    out = _out_dir(args.out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = args.threads if args.threads is not None else _threads_default()
    if args.mode == "cur":
        hashed = _train_cur(cfg, out, args.resume, threads)
        curves = [out / "curves_cur.csv"]
    else:
        hashed = _train_rl(cfg, out, args.mode)
        curves = [out / f"curves_{args.mode}.csv"]
    mio.write_manifest(out / "manifest.json", cfg.to_dict(), cfg.seed, hashed, curves)
    print(f"manifest written to {out / 'manifest.json'}")
    return 0


def _solved_triples(records):
    for rec in records:
        if rec.exact_value is None:
            raise ValueError(f"instance {rec.id} has no exact value; run `mcnlearn solve` first")
        yield rec.id, rec.to_state(), rec.exact_value


def cmd_eval(args) -> int:
    records = mio.read_instances(args.dataset)
    if not records:
        raise ValueError(f"{args.dataset}: no instances")
    if args.policy == "oracle":
        policy = oracle_policy()
    elif args.policy == "random":
        policy = random_policy(episodes=args.episodes, seed=args.seed)
    else:
        experts, _ = mio.load_expert_list(args.checkpoints)
        configs = {id(e.config): e.config for e in experts.experts.values()}
        if len({tuple(sorted(dataclasses.asdict(c).items())) for c in configs.values()}) > 1:
            raise ValueError("expert list mixes different model configurations")
        policy = greedy_policy(experts)
    report = evaluate_policy(_solved_triples(records), policy)
    row = {
        "dataset_id": Path(args.dataset).name,
        "policy": args.policy,
        "n_instances": report.n_instances,
        "n_excluded": report.n_excluded,
        "eta": report.eta,
        "zeta": report.zeta,
        "mean_time_s": report.mean_time_s,
        "seed": args.seed,
    }
    mio.write_csv(args.out, [row], REPORT_COLUMNS, append=True)
    print(f"{args.policy}: eta={report.eta:.4f} zeta={report.zeta:.4f} "
          f"({report.n_instances} instances, {report.n_excluded} excluded) -> {args.out}")
    return 0


def cmd_inspect(args) -> int:
    records = mio.read_instances(args.instance)
    if not records:
        raise ValueError(f"{args.instance}: no instances")
    if args.id is not None:
        matching = [r for r in records if r.id == args.id]
        if not matching:
            raise ValueError(f"no instance with id {args.id!r}")
        rec = matching[0]
    else:
        rec = records[0]
    state = rec.to_state()
    if current_player(state) is Player.TERMINAL:
        raise ValueError(f"instance {rec.id} is terminal; nothing to inspect")
    if args.evaluator == "oracle":
        rows = inspect_action_values(state, "oracle")
    else:
        experts, _ = mio.load_expert_list(args.evaluator)
        rows = inspect_action_values(state, experts)
    print(f"instance {rec.id}: phase value table")
    print(f"{'node':>6} {'value':>12} {'optimal':>8}")
    for row in rows:
        print(f"{row.node:>6} {row.value:>12.6f} {str(row.optimal):>8}")
    if args.csv:
        mio.write_csv(
            args.csv,
            [{"node_id": r.node, "value": r.value, "optimal_flag": int(r.optimal)} for r in rows],
            ["node_id", "value", "optimal_flag"],
        )
        print(f"table written to {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcnlearn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample instances into a JSONL file")
    p.add_argument("--config", help="experiment config JSON (distribution + seed)")
    p.add_argument("--preset", default="DESK", choices=sorted(mio.DISTRIBUTION_PRESETS),
                   help="distribution preset when no config is given")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--prefix", default="inst-")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="attach exact values with the enumeration oracle")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="re-solve already solved records")
    p.add_argument("--max-n", type=int, default=14)
    p.add_argument("--max-budget", type=int, default=6)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train cur | dqn | mc from an experiment config")
    p.add_argument("--mode", required=True, choices=["cur", "dqn", "mc"])
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--resume", action="store_true",
                   help="cur only: reuse experts from a partial checkpoint")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy on a solved dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--policy", required=True, choices=["greedy", "random", "oracle"])
    p.add_argument("--checkpoints", help="expert-list checkpoint (greedy policy)")
    p.add_argument("--episodes", type=int, default=10, help="random policy episodes")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="per-action value table for one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--evaluator", required=True,
                   help="'oracle' or a path to an expert-list checkpoint")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "policy", None) == "greedy" and not args.checkpoints:
        parser.error("--checkpoints is required for the greedy policy")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, mio.CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
