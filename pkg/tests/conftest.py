"""Shared fixture builders and mock samplers."""

from __future__ import annotations

import itertools

import pytest

from headtail.core import (
    ROLE_FILTER,
    ROLE_SAMPLE,
    QueryRecord,
    Trajectory,
    TrajectoryDataset,
)


def make_query(qid: int, gt: str | None = None, level: int | None = None, **kw) -> QueryRecord:
    return QueryRecord(id=qid, gt_answer=gt if gt is not None else f"a{qid}", level=level, **kw)


def make_traj(
    qid: int,
    k: int = 1,
    correct: bool = True,
    gt: str | None = None,
    length: int = 40,
    iteration: int = 1,
    **kw,
) -> Trajectory:
    answer = (gt if gt is not None else f"a{qid}") if correct else f"wrong-{qid}-{k}"
    return Trajectory(
        query_id=qid,
        sample_index=k,
        iteration=iteration,
        length_tokens=length,
        extracted_answer=answer,
        correct=correct,
        **kw,
    )


def make_sample(k_correct: dict[int, int], K: int, lengths: dict[int, int] | None = None):
    """Sample dataset with k_correct[qid] correct draws out of K per query."""
    entries = []
    queries = {}
    for qid, k in k_correct.items():
        q = make_query(qid)
        queries[qid] = q
        length = (lengths or {}).get(qid, 40)
        for j in range(1, K + 1):
            entries.append((q, make_traj(qid, j, correct=j <= k, length=length)))
    return TrajectoryDataset.from_entries(entries, ROLE_SAMPLE), queries


def make_filter(k_correct: dict[int, int], lengths: dict[int, int] | None = None):
    """Filter dataset with exactly k_correct[qid] entries per query."""
    entries = []
    queries = {}
    for qid, k in k_correct.items():
        q = make_query(qid)
        queries[qid] = q
        length = (lengths or {}).get(qid, 40)
        for j in range(1, k + 1):
            entries.append((q, make_traj(qid, j, correct=True, length=length)))
    return TrajectoryDataset.from_entries(entries, ROLE_FILTER), queries


@pytest.fixture
def hand_filter():
    """The recurring worked fixture: three queries with k = (6, 3, 1), K = 8."""
    return make_filter({1: 6, 2: 3, 3: 1})


@pytest.fixture
def hand_sample():
    return make_sample({1: 6, 2: 3, 3: 1}, K=8)


class ScriptedSampler:
    """Sampler returning pre-set correctness; counts every call."""

    def __init__(self, correct_pattern=itertools.repeat(True), length: int = 50):
        self._pattern = iter(correct_pattern)
        self.length = length
        self.fresh_calls = 0
        self.guided_calls = 0
        self.correct_calls = 0

    def _draw(self, query, origin_kwargs=None):
        ok = next(self._pattern)
        answer = query.gt_answer if ok else f"wrong-{query.id}-s{self.fresh_calls}"
        return Trajectory(
            query_id=query.id,
            sample_index=1,
            iteration=1,
            length_tokens=self.length,
            extracted_answer=answer,
            correct=ok,
            **(origin_kwargs or {}),
        )

    def sample_response(self, query):
        self.fresh_calls += 1
        return self._draw(query)

    def guided_sample(self, query, prefix, step, total_steps):
        self.guided_calls += 1
        return self._draw(query)

    def correct_response(self, query, wrong):
        self.correct_calls += 1
        return self._draw(query)


class FailingSampler:
    def sample_response(self, query):
        raise RuntimeError("backend down")

    def guided_sample(self, query, prefix, step, total_steps):
        raise RuntimeError("backend down")

    def correct_response(self, query, wrong):
        raise RuntimeError("backend down")
