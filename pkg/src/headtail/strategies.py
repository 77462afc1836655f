"""Head-tail rebalancing transforms.

Every strategy is a pure function from a filtered dataset (plus, for the
resampling family, a sampler capability) to a train dataset.  Writing k_i
for the number of correct responses a query kept out of K draws:

* ``vanilla``         -- train on the filtered set unchanged.
* ``threshold_clip``  -- cap every query at L entries by seeded random truncation.
* ``head_clip``       -- drop queries that went K for K.
* ``repeat_pad``      -- cycle each solved query's responses up to exactly K entries.
* ``repeat_invert``   -- keep or pad to K - k_i entries per query.
* ``adaptive_resample`` -- draw K - k_i fresh responses per query, refilter, merge.
* ``guided_resample`` -- for tail queries (k_i < L), continue each kept
  trajectory from each of its S step prefixes, refilter, merge.
* ``self_correct_augment`` -- revise discarded responses; verified revisions
  join training twice (correction pair + plain corrected response).

Determinism: identical (input, config, seed) always yields the identical
entry list.  Random truncation draws a per-query Fisher-Yates subset keyed
by (seed, query_id); resampling randomness lives entirely in the sampler's
per-(query, counter) streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .core import (
    ORIGIN_CORRECTED,
    ORIGIN_RESAMPLED_AR,
    ORIGIN_RESAMPLED_GR,
    ROLE_DISCARD,
    ROLE_FILTER,
    ROLE_REFILTER,
    ROLE_RESAMPLE,
    ROLE_TRAIN,
    Entry,
    QueryRecord,
    Trajectory,
    TrajectoryDataset,
    merge_datasets,
)
from .rewards import AnswerNormalizationRules, DEFAULT_RULES, filter_dataset, reward

RESHAPING_KINDS = ("vanilla", "tc", "hc", "rp", "ri")
RESAMPLING_KINDS = ("ar", "gr", "sc")
STRATEGY_KINDS = RESHAPING_KINDS + RESAMPLING_KINDS


class SamplerError(RuntimeError):
    """A sampler call failed; the strategy aborts without a partial train set."""


class Sampler(Protocol):
    """Sampling capability bound to the current-iteration policy."""

    def sample_response(self, query: QueryRecord) -> Trajectory: ...

    def guided_sample(
        self, query: QueryRecord, prefix: Trajectory, step: int, total_steps: int
    ) -> Trajectory: ...

    def correct_response(self, query: QueryRecord, wrong: Trajectory) -> Trajectory: ...


@dataclass(frozen=True)
class StrategyConfig:
    """Which rebalancing transform to run and its knobs.

    ``K`` may be left unset to inherit the run-level sampling number.
    """

    kind: str = "vanilla"
    L: int = 4
    S: int = 4
    K: int | None = None
    min_cot_tokens: int = 10
    seed: int | None = None

    def validate(self, k_samples: int | None = None) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.S < 2:
            raise ValueError("S must be >= 2")
        k = self.K if self.K is not None else k_samples
        if k is not None:
            if k < 1:
                raise ValueError("K must be >= 1")
            if self.L > k:
                raise ValueError(f"L must not exceed K ({self.L} > {k})")
        if self.min_cot_tokens < 0:
            raise ValueError("min_cot_tokens must be >= 0")


def _require_filter(filtered: TrajectoryDataset) -> None:
    if filtered.role != ROLE_FILTER:
        raise ValueError(f"expected a filter dataset, got role {filtered.role!r}")


def _by_query(filtered: TrajectoryDataset) -> dict[int, list[Entry]]:
    groups: dict[int, list[Entry]] = {}
    for entry in filtered.entries:
        groups.setdefault(entry[1].query_id, []).append(entry)
    return groups


def vanilla(filtered: TrajectoryDataset) -> TrajectoryDataset:
    """Train on the filtered set as-is."""
    _require_filter(filtered)
    return filtered.retagged(ROLE_TRAIN)


def threshold_clip(filtered: TrajectoryDataset, L: int, seed: int) -> TrajectoryDataset:
    """Keep at most L correct responses per query, randomly truncated.

    Queries at or under the threshold pass through untouched; above it, a
    uniform random subset of size L survives, chosen by a Fisher-Yates
    shuffle keyed by (seed, query_id) so reruns replay exactly.
    """
    _require_filter(filtered)
    if L < 1:
        raise ValueError("L must be >= 1")
    kept: list[Entry] = []
    for qid, entries in _by_query(filtered).items():
        if len(entries) <= L:
            kept.extend(entries)
            continue
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, qid])
        chosen = np.sort(rng.permutation(len(entries))[:L])
        kept.extend(entries[i] for i in chosen)
    return TrajectoryDataset.from_entries(kept, ROLE_TRAIN)


def head_clip(filtered: TrajectoryDataset, K: int) -> TrajectoryDataset:
    """Drop every query that answered all K draws correctly."""
    _require_filter(filtered)
    if K < 1:
        raise ValueError("K must be >= 1")
    counts = filtered.counts_by_query()
    kept = [e for e in filtered.entries if counts[e[1].query_id] != K]
    return TrajectoryDataset.from_entries(kept, ROLE_TRAIN, presorted=True)


def _cycle(entries: list[Entry], target: int) -> list[Entry]:
    # index ((k - 1) mod k_i) + 1 for k = 1..target, zero-based here
    return [entries[(k - 1) % len(entries)] for k in range(1, target + 1)]


def repeat_pad(filtered: TrajectoryDataset, K: int) -> TrajectoryDataset:
    """Pad every solved query to exactly K entries by cycling its responses.

    A query with k_i correct responses contributes each of them either
    ceil(K/k_i) or floor(K/k_i) times; unsolved queries contribute nothing.
    """
    _require_filter(filtered)
    if K < 1:
        raise ValueError("K must be >= 1")
    out: list[Entry] = []
    for _, entries in _by_query(filtered).items():
        out.extend(_cycle(entries, K))
    return TrajectoryDataset.from_entries(out, ROLE_TRAIN)


def repeat_invert(filtered: TrajectoryDataset, K: int) -> TrajectoryDataset:
    """Aim each query at K - k_i entries, truncating or padding by repetition.

    Fully-correct queries vanish (target 0); rarely-correct queries are
    inflated toward K - k_i by the same cycling rule as repeat_pad.
    """
    _require_filter(filtered)
    if K < 1:
        raise ValueError("K must be >= 1")
    out: list[Entry] = []
    for _, entries in _by_query(filtered).items():
        target = K - len(entries)
        if target <= 0:
            continue
        if len(entries) >= target:
            out.extend(entries[:target])
        else:
            out.extend(_cycle(entries, target))
    return TrajectoryDataset.from_entries(out, ROLE_TRAIN)


def adaptive_resample(
    filtered: TrajectoryDataset,
    corpus: list[QueryRecord],
    sampler: Sampler,
    K: int,
    rules: AnswerNormalizationRules = DEFAULT_RULES,
) -> tuple[TrajectoryDataset, TrajectoryDataset, TrajectoryDataset]:
    """Draw K - k_i fresh responses per corpus query, refilter, merge.

    Resampling weight follows the fail rate: queries the policy already
    masters get nothing, unsolved queries get the full K extra draws.
    Returns (resampled, refiltered, train).
    """
    _require_filter(filtered)
    if K < 1:
        raise ValueError("K must be >= 1")
    counts = filtered.counts_by_query()
    drawn: list[Entry] = []
    for record in sorted(corpus, key=lambda r: r.id):
        deficit = K - counts.get(record.id, 0)
        for j in range(1, deficit + 1):
            try:
                traj = sampler.sample_response(record)
            except Exception as exc:
                raise SamplerError("sampler error") from exc
            drawn.append(
                (record, replace(traj, origin=ORIGIN_RESAMPLED_AR, sample_index=j))
            )
    resampled = TrajectoryDataset.from_entries(drawn, ROLE_RESAMPLE)
    refiltered = filter_dataset(resampled, rules)
    train = merge_datasets(filtered, refiltered)
    return resampled, refiltered, train


def split_steps(traj: Trajectory, S: int) -> tuple[int, ...]:
    """Prefix token offsets that cut a trajectory into S near-equal steps.

    Chunk sizes differ by at most one, larger chunks first.  Returns the S
    offsets (0 = empty prefix, then the start of each later step).
    """
    if S < 2:
        raise ValueError("S must be >= 2")
    if traj.length_tokens < S:
        raise ValueError("trajectory too short to split")
    base, extra = divmod(traj.length_tokens, S)
    offsets = [0]
    for s in range(S - 1):
        offsets.append(offsets[-1] + base + (1 if s < extra else 0))
    return tuple(offsets)


def guided_resample(
    filtered: TrajectoryDataset,
    sampler: Sampler,
    L: int,
    S: int,
    rules: AnswerNormalizationRules = DEFAULT_RULES,
) -> tuple[TrajectoryDataset, TrajectoryDataset, TrajectoryDataset]:
    """Resample tail queries from intermediate steps of their kept responses.

    For every query with 0 < k_i < L, each of its correct trajectories
    seeds S guided draws, one per step prefix (step 1 is the empty prefix,
    i.e. a plain resample).  Trajectories too short to split into S steps
    contribute only their empty-prefix draw.  Returns
    (resampled, refiltered, train).
    """
    _require_filter(filtered)
    if L < 1:
        raise ValueError("L must be >= 1")
    if S < 2:
        raise ValueError("S must be >= 2")
    counts = filtered.counts_by_query()
    drawn: list[Entry] = []
    for record, donor in filtered.entries:
        if counts[donor.query_id] >= L:
            continue
        steps = S if donor.length_tokens >= S else 1
        for step in range(1, steps + 1):
            try:
                traj = sampler.guided_sample(record, donor, step, S)
            except Exception as exc:
                raise SamplerError("sampler error") from exc
            drawn.append(
                (
                    record,
                    replace(
                        traj,
                        origin=ORIGIN_RESAMPLED_GR,
                        sample_index=donor.sample_index,
                        prefix_steps=step - 1,
                    ),
                )
            )
    resampled = TrajectoryDataset.from_entries(drawn, ROLE_RESAMPLE)
    refiltered = filter_dataset(resampled, rules)
    train = merge_datasets(filtered, refiltered)
    return resampled, refiltered, train


def self_correct_augment(
    filtered: TrajectoryDataset,
    discard: TrajectoryDataset,
    sampler: Sampler,
    K: int,
    min_cot_tokens: int,
    rules: AnswerNormalizationRules = DEFAULT_RULES,
) -> TrajectoryDataset:
    """Revise discarded responses and train on the verified corrections.

    Every discarded response of a query with k_i < K gets one correction
    attempt.  A correction survives only if it earns reward 1 and its length
    clears the reasoning floor; each survivor contributes two train entries:
    the correction pair (linked to the wrong response it fixes) and the
    plain corrected response.
    """
    _require_filter(filtered)
    if discard.role != ROLE_DISCARD:
        raise ValueError(f"expected a discard dataset, got role {discard.role!r}")
    if K < 1:
        raise ValueError("K must be >= 1")
    counts = filtered.counts_by_query()
    kept: list[Entry] = []
    for record, wrong in discard.entries:
        if counts.get(wrong.query_id, 0) >= K:
            continue
        try:
            corrected = sampler.correct_response(record, wrong)
        except Exception as exc:
            raise SamplerError("sampler error") from exc
        if reward(record, corrected.extracted_answer, rules) != 1:
            continue
        if corrected.cot_length < min_cot_tokens:
            continue
        corrected = replace(
            corrected,
            origin=ORIGIN_CORRECTED,
            sample_index=wrong.sample_index,
            correct=True,
        )
        kept.append((record, replace(corrected, corrected_from=wrong.sample_index)))
        kept.append((record, corrected))
    corrections = TrajectoryDataset.from_entries(kept, ROLE_REFILTER)
    return merge_datasets(filtered, corrections)


def reshape(
    kind: str,
    filtered: TrajectoryDataset,
    K: int,
    L: int = 4,
    seed: int = 0,
) -> TrajectoryDataset:
    """Dispatch for the sampler-free strategies (vanilla/tc/hc/rp/ri)."""
    if kind == "vanilla":
        return vanilla(filtered)
    if kind == "tc":
        return threshold_clip(filtered, L, seed)
    if kind == "hc":
        return head_clip(filtered, K)
    if kind == "rp":
        return repeat_pad(filtered, K)
    if kind == "ri":
        return repeat_invert(filtered, K)
    raise ValueError(f"strategy {kind!r} requires a sampler; offline mode supports reshaping only")
