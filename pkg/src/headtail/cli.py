"""Command-line interface.

Verbs:
  run        execute one configured run (all modes) and write its report
  sweep      grid of runs over seeds / strategies / K / L / S values
  rebalance  offline reshaping of a trajectory log (JSONL in, JSONL out)
  report     recompute a metrics row from a written dataset snapshot

Exit codes: 0 success, 2 config error, 3 schema error, 4 internal abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .harness import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SCHEMA,
    ConfigError,
    RunAborted,
    RunConfig,
    SchemaError,
    emit_report,
    rebalance_offline,
    run as run_mode,
)
from .metrics import CSV_COLUMNS, build_row, rows_to_csv
from .rewards import DEFAULT_RULES, load_alias_table
from .strategies import STRATEGY_KINDS, StrategyConfig
from .core import ROLE_TRAIN, QueryRecord, Trajectory, TrajectoryDataset


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_json_file(args.config)
    else:
        cfg = RunConfig()
    updates = {}
    if args.n is not None:
        updates["n_queries"] = args.n
    if args.k is not None:
        updates["k_samples"] = args.k
    if args.t is not None:
        updates["iterations"] = args.t
    if args.mode is not None:
        updates["mode"] = args.mode
    if args.restart is not None:
        updates["restart_each_iteration"] = args.restart
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if args.strategy is not None or args.l is not None or args.s is not None:
        st = cfg.strategy
        st = dataclasses.replace(
            st,
            kind=args.strategy if args.strategy is not None else st.kind,
            L=args.l if args.l is not None else st.L,
            S=args.s if args.s is not None else st.S,
        )
        updates["strategy"] = st
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (strict keys)")
    p.add_argument("--n", type=int, help="corpus size")
    p.add_argument("--k", type=int, help="samples per query per iteration")
    p.add_argument("--t", type=int, help="number of iterations")
    p.add_argument("--mode", choices=("self_improve", "batch_baseline", "iterative_union"))
    p.add_argument("--strategy", choices=STRATEGY_KINDS)
    p.add_argument("--l", type=int, help="tail threshold L")
    p.add_argument("--s", type=int, help="guided resampling step count S")
    p.add_argument("--seed", type=int, help="single seed override")
    p.add_argument("--output-dir", help="where to write the report")
    restart = p.add_mutually_exclusive_group()
    restart.add_argument("--restart", dest="restart", action="store_true", default=None)
    restart.add_argument("--no-restart", dest="restart", action="store_false", default=None)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    outdir = Path(cfg.output_dir or "runs/run")
    try:
        report = run_mode(cfg, cfg.seeds[0])
    except RunAborted as exc:
        emit_report(exc.report, outdir)
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    emit_report(report, outdir)
    final = report.rows_for("train")[-1] if report.rows_for("train") else None
    if final is not None and final.level_share is not None:
        print(
            f"seed {report.seed}: train entries {final.total}, "
            f"head {final.head_share:.3f}, tail {final.tail_share:.3f}, "
            f"gap {final.matthew_gap:.3f}"
        )
    print(f"report written to {outdir}")
    return EXIT_OK


def _one_sweep_run(payload: tuple[dict, int, str]) -> tuple[str, int, list[str] | None]:
    cfg_dict, seed, outdir = payload
    cfg = RunConfig.from_dict(cfg_dict)
    try:
        report = run_mode(cfg, seed)
    except RunAborted:
        return outdir, seed, None
    emit_report(report, outdir)
    train_rows = report.rows_for("train")
    return outdir, seed, train_rows[-1].to_csv_fields() if train_rows else None


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(cfg.seeds)
    strategies = args.strategies.split(",") if args.strategies else [cfg.strategy.kind]
    k_values = [int(x) for x in args.k_values.split(",")] if args.k_values else [cfg.k_samples]
    l_values = [int(x) for x in args.l_values.split(",")] if args.l_values else [cfg.strategy.L]
    s_values = [int(x) for x in args.s_values.split(",")] if args.s_values else [cfg.strategy.S]
    base_out = Path(args.output_dir or cfg.output_dir or "runs/sweep")
    jobs: list[tuple[dict, int, str]] = []
    for kind in strategies:
        for k in k_values:
            for L in l_values:
                for S in s_values:
                    if kind in ("tc", "gr") and L > k:
                        continue
                    variant = dataclasses.replace(
                        cfg,
                        k_samples=k,
                        strategy=dataclasses.replace(cfg.strategy, kind=kind, L=L, S=S),
                    )
                    variant.validate()
                    for seed in seeds:
                        outdir = base_out / f"{kind}_k{k}_l{L}_s{S}_seed{seed}"
                        jobs.append((variant.to_dict(), seed, str(outdir)))
    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_one_sweep_run, jobs))
    else:
        results = [_one_sweep_run(j) for j in jobs]
    lines = ["run_dir,seed," + ",".join(CSV_COLUMNS)]
    for outdir, seed, fields in results:
        if fields is not None:
            lines.append(f"{outdir},{seed}," + ",".join(fields))
    base_out.mkdir(parents=True, exist_ok=True)
    (base_out / "sweep_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(jobs)} runs under {base_out}")
    return EXIT_OK


def _cmd_rebalance(args: argparse.Namespace) -> int:
    strategy = StrategyConfig(kind=args.strategy, L=args.l, S=2 if args.s is None else args.s,
                              K=args.k, min_cot_tokens=args.min_cot_tokens, seed=args.seed)
    rules = DEFAULT_RULES
    if args.alias_table:
        rules = dataclasses.replace(rules, symbol_aliases=load_alias_table(args.alias_table))
    summary = rebalance_offline(
        args.input,
        strategy,
        args.k,
        args.output,
        min_cot_tokens=args.min_cot_tokens,
        rules=rules,
    )
    row = summary.pop("metrics_row")
    if args.summary:
        Path(args.summary).write_text(rows_to_csv([row]), encoding="utf-8", newline="\n")
    print(
        f"{summary['input_records']} records in, {summary['filtered']} kept by reward, "
        f"{summary['output_records']} written to {args.output}"
    )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    cfg_path = run_dir / "config.json"
    if cfg_path.exists():
        data = json.loads(cfg_path.read_text(encoding="utf-8"))
        data.pop("seed", None)  # emit_report appends the resolved seed
        cfg = RunConfig.from_dict(data)
    else:
        cfg = RunConfig()
    snapshot = run_dir / "datasets" / (args.dataset + ".jsonl")
    if not snapshot.exists():
        raise SchemaError(f"no snapshot at {snapshot}")
    entries = []
    with open(snapshot, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                record = QueryRecord(
                    id=data["query_id"], gt_answer="", level=data.get("level")
                )
                traj = Trajectory(
                    query_id=data["query_id"],
                    sample_index=data["sample_index"],
                    iteration=data["iteration"],
                    length_tokens=data["length_tokens"],
                    extracted_answer="",
                    correct=data["correct"],
                    origin=data.get("origin", "explored"),
                    prefix_steps=data.get("prefix_steps", 0)
                    if data.get("origin") == "resampled_gr"
                    else 0,
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from exc
            entries.append((record, traj))
    if not entries:
        print(rows_to_csv([]))
        return EXIT_OK
    dataset = TrajectoryDataset.from_entries(entries, ROLE_TRAIN) if all(
        t.correct for _, t in entries
    ) else TrajectoryDataset.from_entries(entries, "sample")
    counts = dataset.counts_by_query()
    row = build_row(max(t.iteration for _, t in entries), dataset.role, dataset, cfg.k_samples, counts)
    print(rows_to_csv([row]), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="headtail", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute one run and write its report")
    _add_run_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of runs over seeds and knobs")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--seeds", help="comma-separated seed list")
    p_sweep.add_argument("--strategies", help="comma-separated strategy kinds")
    p_sweep.add_argument("--k-values", help="comma-separated K grid")
    p_sweep.add_argument("--l-values", help="comma-separated L grid")
    p_sweep.add_argument("--s-values", help="comma-separated S grid")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_reb = sub.add_parser("rebalance", help="offline reshaping of a trajectory log")
    p_reb.add_argument("--input", required=True, help="input JSONL log")
    p_reb.add_argument("--output", required=True, help="output JSONL training records")
    p_reb.add_argument("--strategy", required=True, choices=STRATEGY_KINDS)
    p_reb.add_argument("--k", type=int, required=True, help="sampling number K of the log")
    p_reb.add_argument("--l", type=int, default=4, help="tail threshold L (tc)")
    p_reb.add_argument("--s", type=int, default=None, help="step count S (unused offline)")
    p_reb.add_argument("--min-cot-tokens", type=int, default=0, help="reasoning length floor")
    p_reb.add_argument("--seed", type=int, default=0, help="truncation seed (tc)")
    p_reb.add_argument("--alias-table", help="two-column answer alias file (pattern<TAB>canonical)")
    p_reb.add_argument("--summary", help="optional CSV path for the summary row")
    p_reb.set_defaults(fn=_cmd_rebalance)

    p_rep = sub.add_parser("report", help="recompute metrics from a snapshot")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--dataset", default="train_final", help="snapshot name under datasets/")
    p_rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    raise SystemExit(main())
