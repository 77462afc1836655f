"""Distributional diagnostics: level shares, accuracy buckets, length stats.

The headline degradation/mitigation figures reported for real model runs
are kept here as named reference targets.  They are context for reading a
simulation's report, never assertions: a surrogate learner has no business
hitting numbers produced by a particular 7B model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LEVELS, TrajectoryDataset

REFERENCE_TARGETS = {
    "head_share_unbalanced": 0.511,
    "head_share_rebalanced": 0.248,
    "tail_share_unbalanced": 0.015,
    "tail_share_rebalanced": 0.066,
    "mean_tokens_self_generated": 277.0,
    "mean_tokens_original": 395.0,
    "tail_length_drop_fraction": 0.565,
    "tail_final_mean_tokens": 136.0,
}

CSV_COLUMNS = (
    "iteration",
    "role",
    "total",
    "l1",
    "l2",
    "l3",
    "l4",
    "l5",
    "b25",
    "b50",
    "b75",
    "b100",
    "mean_len",
    "len_l1",
    "len_l2",
    "len_l3",
    "len_l4",
    "len_l5",
    "head",
    "tail",
    "gap",
)

_BUCKET_EDGES = (0.25, 0.50, 0.75, 1.00)


def level_distribution(
    dataset: TrajectoryDataset, levels: tuple[int, ...] = LEVELS
) -> tuple[float, ...]:
    """Entry share per difficulty level; requires every query to be leveled."""
    counts = dict.fromkeys(levels, 0)
    for record, _ in dataset.entries:
        if record.level is None:
            raise ValueError("run calibrate_difficulty first")
        counts[record.level] += 1
    total = len(dataset)
    if total == 0:
        return tuple(0.0 for _ in levels)
    return tuple(counts[lv] / total for lv in levels)


def accuracy_bucket_shares(filtered: TrajectoryDataset, K: int) -> dict[float, float]:
    """Entry share per exact accuracy fraction k_i/K of the entry's query.

    Entry-weighted on purpose: frequently-correct queries account for more
    entries, which is exactly the imbalance being measured.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    counts = filtered.counts_by_query()
    total = len(filtered)
    shares: dict[float, float] = {}
    if total == 0:
        return shares
    for _, traj in filtered.entries:
        frac = counts[traj.query_id] / K
        shares[frac] = shares.get(frac, 0.0) + 1.0 / total
    return shares


def length_stats(
    dataset: TrajectoryDataset,
) -> tuple[float | None, dict[int, float]]:
    """Mean token length overall and per level; empty groups are absent."""
    if len(dataset) == 0:
        return None, {}
    lengths = np.array([t.length_tokens for _, t in dataset.entries], dtype=float)
    by_level: dict[int, list[int]] = {}
    for record, traj in dataset.entries:
        if record.level is not None:
            by_level.setdefault(record.level, []).append(traj.length_tokens)
    return float(lengths.mean()), {
        lv: float(np.mean(v)) for lv, v in sorted(by_level.items())
    }


@dataclass(frozen=True)
class MetricsRow:
    """One diagnostics row; serializes to one fixed-order CSV line."""

    iteration: int
    role: str
    total: int
    level_share: tuple[float, ...] | None
    bucket_share: tuple[float, float, float, float]
    mean_length: float | None
    level_mean_length: tuple[float | None, ...]

    @property
    def head_share(self) -> float | None:
        return self.level_share[0] if self.level_share is not None else None

    @property
    def tail_share(self) -> float | None:
        return self.level_share[-1] if self.level_share is not None else None

    @property
    def matthew_gap(self) -> float | None:
        if self.level_share is None:
            return None
        return self.level_share[0] - self.level_share[-1]

    def to_csv_fields(self) -> list[str]:
        def fmt(x) -> str:
            if x is None:
                return ""
            if isinstance(x, float):
                return format(x, ".12g")
            return str(x)

        fields = [fmt(self.iteration), self.role, fmt(self.total)]
        fields += [fmt(s) for s in (self.level_share or (None,) * 5)]
        fields += [fmt(b) for b in self.bucket_share]
        fields.append(fmt(self.mean_length))
        fields += [fmt(m) for m in self.level_mean_length]
        fields += [fmt(self.head_share), fmt(self.tail_share), fmt(self.matthew_gap)]
        return fields


def build_row(
    iteration: int,
    role: str,
    dataset: TrajectoryDataset,
    K: int,
    k_counts: dict[int, int],
) -> MetricsRow:
    """Summarize one dataset against the iteration's per-query correct counts.

    ``k_counts`` comes from the iteration's filter set, so bucket shares
    mean the same thing for sample, filter, and train rows.  Quarter
    buckets cover (0, .25], (.25, .5], (.5, .75], (.75, 1]; sample entries
    of never-correct queries fall in no bucket.
    """
    total = len(dataset)
    try:
        shares: tuple[float, ...] | None = level_distribution(dataset)
    except ValueError:
        shares = None
    buckets = [0.0, 0.0, 0.0, 0.0]
    if total > 0:
        for _, traj in dataset.entries:
            frac = k_counts.get(traj.query_id, 0) / K
            if frac <= 0.0:
                continue
            for b, edge in enumerate(_BUCKET_EDGES):
                if frac <= edge + 1e-12:
                    buckets[b] += 1.0 / total
                    break
    mean_len, by_level = length_stats(dataset)
    return MetricsRow(
        iteration=iteration,
        role=role,
        total=total,
        level_share=shares,
        bucket_share=tuple(buckets),
        mean_length=mean_len,
        level_mean_length=tuple(by_level.get(lv) for lv in LEVELS),
    )


@dataclass(frozen=True)
class MatthewSummary:
    """Per-iteration head/tail share series and the gap's linear trend."""

    iterations: tuple[int, ...]
    head: tuple[float, ...]
    tail: tuple[float, ...]
    gap: tuple[float, ...]
    slope: float | None


def matthew_series(rows: list[MetricsRow]) -> MatthewSummary:
    """Head/tail trajectory over iterations plus least-squares gap slope."""
    its = [r.iteration for r in rows]
    if any(b <= a for a, b in zip(its, its[1:])):
        raise ValueError("rows must be ordered by strictly ascending iteration")
    if any(r.level_share is None for r in rows):
        raise ValueError("rows must carry level shares")
    gaps = [r.matthew_gap for r in rows]
    slope = None
    if len(rows) >= 2:
        slope = float(np.polyfit(np.array(its, dtype=float), np.array(gaps), 1)[0])
    return MatthewSummary(
        iterations=tuple(its),
        head=tuple(r.head_share for r in rows),
        tail=tuple(r.tail_share for r in rows),
        gap=tuple(gaps),
        slope=slope,
    )


def rows_to_csv(rows: list[MetricsRow]) -> str:
    """Fixed-schema CSV (UTF-8 text, LF endings, header always present)."""
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(r.to_csv_fields()) for r in rows)
    return "\n".join(lines) + "\n"
