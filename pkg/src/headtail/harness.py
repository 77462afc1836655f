"""End-to-end orchestration: the loop, experiment modes, offline rebalancing.

One run = calibrate difficulty once from the initial policy, then iterate
explore / filter / rebalance / train, recording diagnostics rows for the
sample, filter, and train sets of every iteration.  Everything downstream
of the config and seed is deterministic to the byte.

Modes
-----
self_improve    the standard loop; the strategy reshapes each iteration's
                filtered set before training.
batch_baseline  draw all T*K samples from the initial policy in one pass,
                filter, train once.
iterative_union train each iteration on the union of every filtered set so
                far (the strategy applies per iteration or on the union,
                per ``apply_point``); the final training step therefore
                sees the full union.

Offline mode applies the sampler-free reshaping strategies to real
trajectory logs (JSONL, one record per sampled response).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .core import (
    ROLE_FILTER,
    ROLE_SAMPLE,
    ROLE_TRAIN,
    QueryRecord,
    Trajectory,
    TrajectoryDataset,
    merge_datasets,
)
from .learner import (
    CorpusParams,
    LearnerParams,
    LearnerState,
    calibrate_difficulty,
    init_learner,
    synth_corpus,
)
from .metrics import REFERENCE_TARGETS, MetricsRow, build_row, rows_to_csv
from .rewards import AnswerNormalizationRules, DEFAULT_RULES, cot_length_filter, discard_dataset, filter_dataset
from .strategies import (
    RESHAPING_KINDS,
    SamplerError,
    StrategyConfig,
    adaptive_resample,
    guided_resample,
    reshape,
    self_correct_augment,
)

MODES = ("self_improve", "batch_baseline", "iterative_union")
APPLY_POINTS = ("per_iteration", "on_union")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCHEMA = 3
EXIT_ABORT = 4

OUTPUT_DIR_ENV = "HEADTAIL_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid run configuration; nothing has been executed."""


class SchemaError(ValueError):
    """Malformed offline input; carries the offending line number."""


class RunAborted(RuntimeError):
    """A sampler or training failure stopped a run; partial report attached."""

    def __init__(self, message: str, report: "RunReport"):
        super().__init__(message)
        self.report = report


def _from_dict(cls, data: dict[str, Any], where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    """Resolved experiment configuration; strict on unknown keys.

    ``restart_each_iteration=False`` trains each iteration's policy from the
    previous one, which is what lets distribution drift compound across
    iterations; True restarts from the initial policy every iteration, so
    the learned state at iteration t is a pure function of (initial state,
    that iteration's train set).
    """

    n_queries: int = 2000
    k_samples: int = 8
    iterations: int = 5
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    mode: str = "self_improve"
    restart_each_iteration: bool = False
    seeds: tuple[int, ...] = (0,)
    learner: LearnerParams = field(default_factory=LearnerParams)
    corpus: CorpusParams = field(default_factory=CorpusParams)
    calibration_shots: int = 64
    apply_point: str = "on_union"
    output_dir: str | None = None

    def validate(self) -> None:
        if self.n_queries < 1:
            raise ConfigError("n_queries must be >= 1")
        if self.k_samples < 1:
            raise ConfigError("k_samples must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.apply_point not in APPLY_POINTS:
            raise ConfigError(f"apply_point must be one of {APPLY_POINTS}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.calibration_shots < 1:
            raise ConfigError("calibration_shots must be >= 1")
        try:
            self.strategy.validate(self.k_samples)
            self.learner.validate()
            self.corpus.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_strategy(self, seed: int) -> StrategyConfig:
        cfg = self.strategy
        if cfg.K is None:
            cfg = replace(cfg, K=self.k_samples)
        if cfg.seed is None:
            cfg = replace(cfg, seed=seed)
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_queries": self.n_queries,
            "k_samples": self.k_samples,
            "iterations": self.iterations,
            "strategy": dataclasses.asdict(self.strategy),
            "mode": self.mode,
            "restart_each_iteration": self.restart_each_iteration,
            "seeds": list(self.seeds),
            "learner": dataclasses.asdict(self.learner),
            "corpus": dataclasses.asdict(self.corpus),
            "calibration_shots": self.calibration_shots,
            "apply_point": self.apply_point,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "strategy" in data and isinstance(data["strategy"], dict):
            data["strategy"] = _from_dict(StrategyConfig, data["strategy"], "strategy")
        if "learner" in data and isinstance(data["learner"], dict):
            data["learner"] = _from_dict(LearnerParams, data["learner"], "learner")
        if "corpus" in data and isinstance(data["corpus"], dict):
            data["corpus"] = _from_dict(CorpusParams, data["corpus"], "corpus")
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class IterationEval:
    iteration: int
    greedy_pass1: float
    sampled_pass1: float


@dataclass
class RunReport:
    """Everything a run produced: rows, evals, final snapshots, flags."""

    config: dict[str, Any]
    seed: int
    rows: list[MetricsRow] = field(default_factory=list)
    evals: list[IterationEval] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    incomplete: bool = False
    distinct_solved: int = 0
    final_filter: TrajectoryDataset | None = None
    final_train: TrajectoryDataset | None = None
    final_state: LearnerState | None = None

    def rows_for(self, role: str) -> list[MetricsRow]:
        return [r for r in self.rows if r.role == role]


def _apply_strategy(
    cfg: StrategyConfig,
    iteration: int,
    filtered: TrajectoryDataset,
    discarded: TrajectoryDataset,
    corpus: list[QueryRecord],
    sampler: LearnerState,
    rules: AnswerNormalizationRules,
) -> TrajectoryDataset:
    kind = cfg.kind
    if kind in RESHAPING_KINDS:
        # vary the truncation subset across iterations while staying replayable
        return reshape(kind, filtered, cfg.K, cfg.L, seed=(cfg.seed or 0) + iteration)
    if kind == "ar":
        return adaptive_resample(filtered, corpus, sampler, cfg.K, rules)[2]
    if kind == "gr":
        return guided_resample(filtered, sampler, cfg.L, cfg.S, rules)[2]
    if kind == "sc":
        return self_correct_augment(
            filtered, discarded, sampler, cfg.K, cfg.min_cot_tokens, rules
        )
    raise ConfigError(f"unknown strategy kind {kind!r}")


def _prepared_corpus_and_learner(
    config: RunConfig, seed: int
) -> tuple[list[QueryRecord], LearnerState]:
    corpus = synth_corpus(config.n_queries, seed, config.corpus)
    probe = init_learner(corpus, config.learner, seed)
    levels = calibrate_difficulty(probe.pass_rates(corpus, config.calibration_shots))
    corpus = [replace(r, level=levels[r.id]) for r in corpus]
    learner = init_learner(corpus, config.learner, seed)
    return corpus, learner


def _record_iteration(
    report: RunReport,
    iteration: int,
    K: int,
    sample: TrajectoryDataset,
    filtered: TrajectoryDataset,
    train_set: TrajectoryDataset,
) -> dict[int, int]:
    k_counts = filtered.counts_by_query()
    report.rows.append(build_row(iteration, ROLE_SAMPLE, sample, K, k_counts))
    report.rows.append(build_row(iteration, ROLE_FILTER, filtered, K, k_counts))
    report.rows.append(build_row(iteration, ROLE_TRAIN, train_set, K, k_counts))
    return k_counts


def _train_next(
    config: RunConfig,
    base: LearnerState,
    current: LearnerState,
    train_set: TrajectoryDataset,
) -> LearnerState:
    if config.restart_each_iteration:
        source = base.clone()
        source.draw_counter = dict(current.draw_counter)
        source.iteration = current.iteration
        return source.train(train_set, config.k_samples)
    return current.train(train_set, config.k_samples)


def run_self_improvement(
    config: RunConfig, seed: int | None = None, rules: AnswerNormalizationRules = DEFAULT_RULES
) -> RunReport:
    """The exploration / filtering / learning loop with a rebalancing strategy."""
    config.validate()
    if config.mode != "self_improve":
        raise ConfigError(f"run_self_improvement requires mode=self_improve, got {config.mode!r}")
    return _run_loop(config, seed if seed is not None else config.seeds[0], rules, union=False)


def run_iterative_union(
    config: RunConfig, seed: int | None = None, rules: AnswerNormalizationRules = DEFAULT_RULES
) -> RunReport:
    """Loop variant that trains on the union of all filtered sets so far."""
    config.validate()
    if config.mode != "iterative_union":
        raise ConfigError(f"run_iterative_union requires mode=iterative_union, got {config.mode!r}")
    return _run_loop(config, seed if seed is not None else config.seeds[0], rules, union=True)


def _run_loop(
    config: RunConfig, seed: int, rules: AnswerNormalizationRules, union: bool
) -> RunReport:
    corpus, learner = _prepared_corpus_and_learner(config, seed)
    base = learner.clone()
    strategy = config.resolved_strategy(seed)
    report = RunReport(config=config.to_dict(), seed=seed)
    solved: set[int] = set()
    union_filter: TrajectoryDataset | None = None
    union_reshaped: TrajectoryDataset | None = None
    filtered = None
    train_set = None
    try:
        for t in range(1, config.iterations + 1):
            sample = learner.sample_batch(corpus, config.k_samples)
            filtered = filter_dataset(sample, rules)
            discarded = discard_dataset(sample, rules)
            solved.update(filtered.counts_by_query())
            if union:
                union_filter = (
                    filtered.retagged(ROLE_TRAIN)
                    if union_filter is None
                    else merge_datasets(union_filter, filtered)
                )
                if config.apply_point == "per_iteration":
                    reshaped = _apply_strategy(
                        strategy, t, filtered, discarded, corpus, learner, rules
                    )
                    union_reshaped = (
                        reshaped
                        if union_reshaped is None
                        else merge_datasets(union_reshaped, reshaped)
                    )
                    train_set = union_reshaped
                else:
                    train_set = _apply_strategy(
                        strategy,
                        t,
                        union_filter.retagged(ROLE_FILTER),
                        discarded,
                        corpus,
                        learner,
                        rules,
                    )
            else:
                train_set = _apply_strategy(
                    strategy, t, filtered, discarded, corpus, learner, rules
                )
            _record_iteration(report, t, config.k_samples, sample, filtered, train_set)
            if len(train_set) == 0:
                report.warnings.append(f"iteration {t}: empty training set, forgetting only")
            learner = _train_next(config, base, learner, train_set)
            report.evals.append(
                IterationEval(
                    iteration=t,
                    greedy_pass1=learner.eval_greedy_pass1(corpus),
                    sampled_pass1=learner.eval_sampled_pass1(corpus, t),
                )
            )
    except SamplerError as exc:
        report.incomplete = True
        raise RunAborted(str(exc), report) from exc
    report.distinct_solved = len(solved)
    report.final_filter = filtered
    report.final_train = train_set
    report.final_state = learner
    return report


def run_batch_baseline(
    config: RunConfig, seed: int | None = None, rules: AnswerNormalizationRules = DEFAULT_RULES
) -> RunReport:
    """Spend the whole T*K budget on the initial policy in a single pass."""
    config.validate()
    if config.mode != "batch_baseline":
        raise ConfigError(f"run_batch_baseline requires mode=batch_baseline, got {config.mode!r}")
    seed = seed if seed is not None else config.seeds[0]
    corpus, learner = _prepared_corpus_and_learner(config, seed)
    base = learner.clone()
    strategy = config.resolved_strategy(seed)
    report = RunReport(config=config.to_dict(), seed=seed)
    budget = config.iterations * config.k_samples
    try:
        sample = learner.sample_batch(corpus, budget)
        filtered = filter_dataset(sample, rules)
        discarded = discard_dataset(sample, rules)
        train_set = _apply_strategy(strategy, 1, filtered, discarded, corpus, learner, rules)
        _record_iteration(report, 1, config.k_samples, sample, filtered, train_set)
        if len(train_set) == 0:
            report.warnings.append("iteration 1: empty training set, forgetting only")
        learner = _train_next(config, base, learner, train_set)
        report.evals.append(
            IterationEval(
                iteration=1,
                greedy_pass1=learner.eval_greedy_pass1(corpus),
                sampled_pass1=learner.eval_sampled_pass1(corpus, 1),
            )
        )
    except SamplerError as exc:
        report.incomplete = True
        raise RunAborted(str(exc), report) from exc
    report.distinct_solved = len(filtered.counts_by_query())
    report.final_filter = filtered
    report.final_train = train_set
    report.final_state = learner
    return report


def run(config: RunConfig, seed: int | None = None) -> RunReport:
    """Dispatch on config.mode."""
    config.validate()
    runner = {
        "self_improve": run_self_improvement,
        "batch_baseline": run_batch_baseline,
        "iterative_union": run_iterative_union,
    }[config.mode]
    return runner(config, seed)


# -- offline mode -----------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryLogRecord:
    """One line of an offline trajectory log."""

    query_id: int
    gt_answer: str
    extracted_answer: str
    token_count: int
    step_offsets: tuple[int, ...] = ()
    iteration: int = 1

    def __post_init__(self) -> None:
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")
        if self.iteration < 1:
            raise ValueError("iteration must be >= 1")


_LOG_FIELDS = {"query_id", "gt_answer", "extracted_answer", "token_count", "step_offsets", "iteration"}
_LOG_REQUIRED = {"query_id", "gt_answer", "extracted_answer", "token_count"}


def parse_log_line(line: str, lineno: int) -> TrajectoryLogRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {lineno}: not valid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"line {lineno}: expected a JSON object")
    unknown = set(data) - _LOG_FIELDS
    if unknown:
        raise SchemaError(f"line {lineno}: unknown fields {sorted(unknown)}")
    missing = _LOG_REQUIRED - set(data)
    if missing:
        raise SchemaError(f"line {lineno}: missing fields {sorted(missing)}")
    try:
        return TrajectoryLogRecord(
            query_id=int(data["query_id"]),
            gt_answer=str(data["gt_answer"]),
            extracted_answer=str(data["extracted_answer"]),
            token_count=int(data["token_count"]),
            step_offsets=tuple(int(x) for x in data.get("step_offsets", ())),
            iteration=int(data.get("iteration", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"line {lineno}: {exc}") from exc


def load_log(path: str | Path) -> list[TrajectoryLogRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_log_line(line, lineno))
    return records


def log_to_dataset(records: list[TrajectoryLogRecord]) -> TrajectoryDataset:
    """Assemble log records into a sample dataset; gt conflicts are schema errors."""
    gt: dict[int, str] = {}
    for i, rec in enumerate(records, start=1):
        prior = gt.setdefault(rec.query_id, rec.gt_answer)
        if prior != rec.gt_answer:
            raise SchemaError(f"record {i}: conflicting gt_answer for query {rec.query_id}")
    queries = {qid: QueryRecord(id=qid, gt_answer=ans) for qid, ans in gt.items()}
    indices: dict[int, int] = {}
    entries = []
    for rec in records:
        indices[rec.query_id] = indices.get(rec.query_id, 0) + 1
        boundaries = tuple(b for b in rec.step_offsets if 0 < b < rec.token_count)
        traj = Trajectory(
            query_id=rec.query_id,
            sample_index=indices[rec.query_id],
            iteration=rec.iteration,
            length_tokens=rec.token_count,
            extracted_answer=rec.extracted_answer,
            correct=False,
            step_boundaries=boundaries,
        )
        entries.append((queries[rec.query_id], traj))
    return TrajectoryDataset.from_entries(entries, ROLE_SAMPLE)


def rebalance_offline(
    input_path: str | Path,
    strategy: StrategyConfig,
    K: int,
    output_path: str | Path,
    min_cot_tokens: int = 0,
    rules: AnswerNormalizationRules = DEFAULT_RULES,
) -> dict[str, Any]:
    """Rebalance a real trajectory log and write the training records.

    Only the sampler-free reshaping strategies are available offline; the
    reasoning-length floor (if any) is applied to the filtered set before
    per-query counts are taken, so clipped/padded counts reflect usable
    responses only.  Nothing is written unless the whole input parses.
    """
    if strategy.kind not in RESHAPING_KINDS:
        raise ConfigError("strategy requires a sampler; offline mode supports reshaping only")
    if K < 1:
        raise ConfigError("K must be >= 1")
    strategy.validate(K)
    records = load_log(input_path)
    sample = log_to_dataset(records)
    filtered = filter_dataset(sample, rules)
    if min_cot_tokens > 0:
        filtered = cot_length_filter(filtered, min_cot_tokens)
    seed = strategy.seed if strategy.seed is not None else 0
    train = reshape(strategy.kind, filtered, K, strategy.L, seed=seed)
    out = Path(output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for record, traj in train.entries:
            fh.write(json.dumps(_snapshot_entry(record, traj), sort_keys=True) + "\n")
    k_counts = filtered.counts_by_query()
    row = build_row(1, ROLE_TRAIN, train, K, k_counts)
    return {
        "input_records": len(records),
        "filtered": len(filtered),
        "output_records": len(train),
        "distinct_queries": len(k_counts),
        "metrics_row": row,
    }


# -- serialization ----------------------------------------------------------


def _snapshot_entry(record: QueryRecord, traj: Trajectory) -> dict[str, Any]:
    return {
        "query_id": traj.query_id,
        "sample_index": traj.sample_index,
        "iteration": traj.iteration,
        "origin": traj.origin,
        "prefix_steps": traj.prefix_steps,
        "length_tokens": traj.length_tokens,
        "level": record.level,
        "correct": traj.correct,
    }


def _write_jsonl(path: Path, dataset: TrajectoryDataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record, traj in dataset.entries:
            fh.write(json.dumps(_snapshot_entry(record, traj), sort_keys=True) + "\n")


def emit_report(report: RunReport, output_dir: str | Path) -> list[Path]:
    """Write metrics.csv, dataset snapshots, config, learner state, summary.

    Output is byte-stable: identical reports produce identical files.
    """
    outdir = Path(os.environ.get(OUTPUT_DIR_ENV) or output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "datasets").mkdir(exist_ok=True)
        written: list[Path] = []

        csv_path = outdir / "metrics.csv"
        csv_path.write_text(rows_to_csv(report.rows), encoding="utf-8", newline="\n")
        written.append(csv_path)

        for name, ds in (("train_final", report.final_train), ("filter_final", report.final_filter)):
            if ds is not None:
                p = outdir / "datasets" / f"{name}.jsonl"
                _write_jsonl(p, ds)
                written.append(p)

        cfg_path = outdir / "config.json"
        cfg_payload = dict(report.config)
        cfg_payload["seed"] = report.seed
        cfg_path.write_text(
            json.dumps(cfg_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        written.append(cfg_path)

        if report.final_state is not None:
            state_path = outdir / "learner_final.json"
            state_path.write_text(report.final_state.to_json() + "\n", encoding="utf-8", newline="\n")
            written.append(state_path)

        summary = {
            "seed": report.seed,
            "incomplete": report.incomplete,
            "warnings": report.warnings,
            "distinct_solved": report.distinct_solved,
            "evals": [dataclasses.asdict(e) for e in report.evals],
            "reference_targets": REFERENCE_TARGETS,
        }
        summary_path = outdir / "summary.json"
        summary_path.write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        written.append(summary_path)
        return written
    except OSError as exc:
        raise OSError(f"failed writing report under {outdir}: {exc}") from exc
