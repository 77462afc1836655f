"""Answer normalization, the binary reward, and correctness filtering.

Grading is exact string match after a deterministic normalization pass.
The default normalization exists because raw exact match misgrades answers
that differ only in formatting (LaTeX ``\\pi`` vs the glyph, stray math
wrappers, spacing around fraction slashes).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from .core import (
    ROLE_DISCARD,
    ROLE_FILTER,
    ROLE_REFILTER,
    ROLE_RESAMPLE,
    ROLE_SAMPLE,
    QueryRecord,
    TrajectoryDataset,
)

# pattern -> canonical replacement; patterns are regexes applied in order
DEFAULT_SYMBOL_ALIASES: tuple[tuple[str, str], ...] = (
    (r"\\pi\b", "π"),
    (r"\s*\\times\s*", "×"),
    (r"\s*/\s*", "/"),
)

_MATH_WRAPPERS = ("$", r"\(", r"\)", r"\[", r"\]")


@dataclass(frozen=True)
class AnswerNormalizationRules:
    """Switches for the normalization pipeline. Applying twice equals once."""

    lowercase: bool = True
    trim_whitespace: bool = True
    strip_math_wrappers: bool = True
    symbol_aliases: tuple[tuple[str, str], ...] = DEFAULT_SYMBOL_ALIASES


DEFAULT_RULES = AnswerNormalizationRules()
EXACT_MATCH_RULES = AnswerNormalizationRules(
    lowercase=False, trim_whitespace=False, strip_math_wrappers=False, symbol_aliases=()
)


@lru_cache(maxsize=64)
def _compiled(aliases: tuple[tuple[str, str], ...]):
    return tuple((re.compile(p), c) for p, c in aliases)


def normalize_answer(raw: str, rules: AnswerNormalizationRules = DEFAULT_RULES) -> str:
    """Canonical form of an extracted or ground-truth answer string."""
    s = raw
    if rules.trim_whitespace:
        s = s.strip()
    if rules.strip_math_wrappers:
        for w in _MATH_WRAPPERS:
            s = s.replace(w, "")
    if rules.lowercase:
        s = s.lower()
    for pattern, canonical in _compiled(rules.symbol_aliases):
        s = pattern.sub(canonical, s)
    if rules.trim_whitespace:
        s = s.strip()
    return s


def reward(query: QueryRecord, extracted: str, rules: AnswerNormalizationRules = DEFAULT_RULES) -> int:
    """Binary reward: 1 iff the extracted answer matches ground truth."""
    return int(normalize_answer(extracted, rules) == normalize_answer(query.gt_answer, rules))


def load_alias_table(path: str | Path) -> tuple[tuple[str, str], ...]:
    """Read a two-column alias table (pattern<TAB>canonical, UTF-8)."""
    pairs: list[tuple[str, str]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise ValueError(f"alias table line {lineno}: expected pattern<TAB>canonical")
        pattern, canonical = line.split("\t", 1)
        pairs.append((pattern, canonical))
    return tuple(pairs)


_FILTER_OUT_ROLE = {ROLE_SAMPLE: ROLE_FILTER, ROLE_RESAMPLE: ROLE_REFILTER}


def filter_dataset(
    sampled: TrajectoryDataset, rules: AnswerNormalizationRules = DEFAULT_RULES
) -> TrajectoryDataset:
    """Keep exactly the reward-1 entries, marked correct, order preserved.

    Sample datasets filter to role ``filter``; resample datasets to
    ``refilter``.
    """
    out_role = _FILTER_OUT_ROLE.get(sampled.role)
    if out_role is None:
        raise ValueError(f"filter_dataset expects a sample or resample dataset, got {sampled.role!r}")
    kept = [
        (r, t if t.correct else replace(t, correct=True))
        for r, t in sampled.entries
        if reward(r, t.extracted_answer, rules) == 1
    ]
    return TrajectoryDataset.from_entries(kept, out_role, presorted=True)


def discard_dataset(
    sampled: TrajectoryDataset, rules: AnswerNormalizationRules = DEFAULT_RULES
) -> TrajectoryDataset:
    """Complement of :func:`filter_dataset`: the reward-0 entries."""
    if sampled.role not in _FILTER_OUT_ROLE:
        raise ValueError(f"discard_dataset expects a sample or resample dataset, got {sampled.role!r}")
    dropped = [
        (r, replace(t, correct=False) if t.correct else t)
        for r, t in sampled.entries
        if reward(r, t.extracted_answer, rules) == 0
    ]
    return TrajectoryDataset.from_entries(dropped, ROLE_DISCARD, presorted=True)


def cot_length_filter(dataset: TrajectoryDataset, min_tokens: int) -> TrajectoryDataset:
    """Drop entries whose freshly generated reasoning is shorter than the floor.

    The floor applies to ``length_tokens - prefix_tokens``, so guided
    resamples are judged on their continuation only.
    """
    if min_tokens < 0:
        raise ValueError("min_tokens must be >= 0")
    kept = [(r, t) for r, t in dataset.entries if t.cot_length >= min_tokens]
    return TrajectoryDataset.from_entries(kept, dataset.role, presorted=True)
