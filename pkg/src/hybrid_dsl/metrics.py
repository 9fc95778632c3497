"""Rank-based retrieval metrics (Hit@k, MRR, nDCG@k, latency) and run evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dsl.ast import DslProgram
from .dsl.parser import parse_program
from .errors import AlignmentError, DslError, EmptyBatch, ExecutionError
from .executor import ExecutionContext, execute

NDCG_CUTOFF = 5


@dataclass(frozen=True)
class RankedJudgment:
    query_id: str
    ranked_keys: tuple[str, ...]
    gold_keys: frozenset[str]
    relevance: Mapping[str, int] = field(default_factory=dict)
    latency_ms: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranked_keys", tuple(self.ranked_keys))
        object.__setattr__(self, "gold_keys", frozenset(self.gold_keys))
        if not self.gold_keys:
            raise ValueError(f"{self.query_id}: gold_keys must be nonempty")
        if len(set(self.ranked_keys)) != len(self.ranked_keys):
            raise ValueError(f"{self.query_id}: ranked_keys must be unique")
        if any(v < 0 for v in self.relevance.values()):
            raise ValueError(f"{self.query_id}: relevance grades must be >= 0")

    def rel(self, key: str) -> int:
        if key in self.relevance:
            return self.relevance[key]
        return 1 if key in self.gold_keys else 0

    def first_relevant_rank(self) -> int | None:
        for i, key in enumerate(self.ranked_keys, start=1):
            if self.rel(key) > 0:
                return i
        return None


def _require(judgments: Sequence[RankedJudgment]) -> None:
    if not judgments:
        raise EmptyBatch("metric over an empty batch")


def hit_at_k(judgments: Sequence[RankedJudgment], k: int) -> float:
    _require(judgments)
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for j in judgments:
        r = j.first_relevant_rank()
        hits += r is not None and r <= k
    return hits / len(judgments)


def mrr(judgments: Sequence[RankedJudgment]) -> float:
    _require(judgments)
    total = 0.0
    for j in judgments:
        r = j.first_relevant_rank()
        if r is not None:
            total += 1.0 / r
    return total / len(judgments)


def dcg(gains: Sequence[int], k: int) -> float:
    return sum((2.0 ** g - 1.0) / math.log2(i + 1) for i, g in enumerate(gains[:k], start=1))


def ndcg_at_k(judgments: Sequence[RankedJudgment], k: int = NDCG_CUTOFF) -> float:
    _require(judgments)
    total = 0.0
    for j in judgments:
        judged = set(j.gold_keys) | set(j.relevance)
        ideal = sorted((j.rel(key) for key in judged), reverse=True)
        idcg = dcg(ideal, k)
        if idcg > 0:
            total += dcg([j.rel(key) for key in j.ranked_keys], k) / idcg
    return total / len(judgments)


def ndcg_at_5(judgments: Sequence[RankedJudgment]) -> float:
    return ndcg_at_k(judgments, 5)


def mean_latency(judgments: Sequence[RankedJudgment]) -> float:
    _require(judgments)
    return math.fsum(j.latency_ms for j in judgments) / len(judgments)


def metrics_report(judgments: Sequence[RankedJudgment]) -> dict[str, float]:
    return {
        "hit@1": hit_at_k(judgments, 1),
        "hit@3": hit_at_k(judgments, 3),
        "mrr": mrr(judgments),
        "ndcg@5": ndcg_at_5(judgments),
        "latency_ms_mean": mean_latency(judgments),
    }


def judge(
    query_id: str,
    gold_id: str,
    program: DslProgram | None,
    ctx: ExecutionContext,
    timing: bool = True,
) -> RankedJudgment:
    """Execute ``program`` over ``ctx``; invalid or failing programs rank nothing."""
    keys: tuple[str, ...] = ()
    latency = 0.0
    if program is not None:
        try:
            result = execute(program, ctx)
        except ExecutionError:
            pass
        else:
            keys = result.keys
            latency = result.latency_ms
    return RankedJudgment(query_id, keys, frozenset({gold_id}), latency_ms=latency if timing else 0.0)


def evaluate_run(triplets, programs, ctx: ExecutionContext, timing: bool = True) -> dict:
    """Score candidate programs against triplets, each over its candidate pool.

    ``programs`` is a sequence of ``(query_id, program_or_text)`` pairs aligned
    1:1 with ``triplets``. Text is parsed as a wire program; ``None`` or
    unparseable entries count as invalid.
    """
    if len(triplets) != len(programs):
        raise AlignmentError(f"{len(triplets)} triplets but {len(programs)} programs")
    if not triplets:
        raise EmptyBatch("evaluation over an empty batch")
    judgments = []
    n_valid = 0
    for t, (query_id, program) in zip(triplets, programs):
        if query_id != t.query_id:
            raise AlignmentError(f"program for {query_id!r} aligned with triplet {t.query_id!r}")
        if isinstance(program, str):
            try:
                program = parse_program(program)
            except DslError:
                program = None
        j = judge(t.query_id, t.gold_id, program, ctx.restricted(t.candidate_pool), timing)
        n_valid += program is not None
        judgments.append(j)
    report = metrics_report(judgments)
    report["n_queries"] = len(judgments)
    report["n_parsed"] = n_valid
    return report
