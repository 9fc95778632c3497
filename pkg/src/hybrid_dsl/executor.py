"""Execute DSL programs: vector search, placeholder injection, SQL filtering, ranking.

Membership is decided by the SQL predicate alone; each ``IN <vector_k>``
behaves as an intersective constraint against the k-th binding's key set.
Vector scores only order the surviving keys.
"""

from __future__ import annotations

import operator
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Mapping, Union

from .corpus import (
    BOOL,
    ELEMENT_ATTRIBUTES,
    FIELD_TYPES,
    INT,
    STRING,
    TIMESTAMP,
    Attachment,
    Corpus,
    EmailRecord,
    FolderLabel,
    Granularity,
    parse_timestamp,
)
from .dsl.ast import (
    And,
    BoolConst,
    Comparison,
    DslProgram,
    ElementPath,
    ElementProjection,
    Expr,
    FieldRef,
    Membership,
    Or,
    RelativeDate,
    iter_nodes,
)
from .errors import ExecutionError, NotAListField, TypeMismatch
from .vectors import (
    DEFAULT_TAU,
    DEFAULT_TOP_K,
    CandidateBinding,
    Embedder,
    FieldIndex,
    HashingEmbedder,
    build_index,
    restrict_indexes,
    search,
)

# Fixed default clock so runs are reproducible unless a caller injects one.
DEFAULT_NOW = datetime(2025, 6, 30, 12, 0, 0, tzinfo=timezone.utc)

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

Element = Union[FolderLabel, Attachment]


@dataclass(frozen=True)
class ExecutionContext:
    corpus: Corpus
    indexes: Mapping[str, FieldIndex]
    embedder: Embedder
    now: datetime = DEFAULT_NOW
    top_k: int = DEFAULT_TOP_K
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        now = self.now if self.now.tzinfo else self.now.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "now", now.astimezone(timezone.utc).replace(microsecond=0))

    @classmethod
    def build(cls, corpus: Corpus, embedder: Embedder | None = None, **kwargs) -> ExecutionContext:
        embedder = embedder or HashingEmbedder()
        return cls(corpus, build_index(corpus, embedder), embedder, **kwargs)

    def restricted(self, message_ids) -> ExecutionContext:
        """Context over a sub-corpus (e.g. a candidate pool), reusing stored vectors."""
        sub = self.corpus.subset(message_ids)
        return replace(self, corpus=sub, indexes=restrict_indexes(self.indexes, sub.ids))


@dataclass(frozen=True)
class RetrievalResult:
    keys: tuple[str, ...]
    scores: tuple[float | None, ...]
    latency_ms: float = 0.0
    trace: dict[str, int] = field(default_factory=dict)

    def to_json(self, timing: bool = True) -> dict:
        return {
            "keys": list(self.keys),
            "scores": list(self.scores),
            "latency_ms": self.latency_ms if timing else 0.0,
            "trace": dict(self.trace),
        }


@dataclass(frozen=True)
class Row:
    """One row of ``email`` or of ``email, json_each(email.<list>)``."""

    record: EmailRecord
    element: Element | None = None


def expand_json_each(record: EmailRecord, list_field: str) -> list[Row]:
    if list_field not in ELEMENT_ATTRIBUTES:
        raise NotAListField(list_field)
    return [Row(record, e) for e in record.elements(list_field)]


# static checks ---------------------------------------------------------------


def _operand_kind(operand: FieldRef | ElementPath, each_field: str | None) -> str:
    if isinstance(operand, ElementPath):
        if each_field is None:
            raise ExecutionError("json_extract used without a json_each source")
        if operand.attr not in ELEMENT_ATTRIBUTES[each_field]:
            raise ExecutionError(f"{each_field} elements have no attribute {operand.attr!r}")
        return STRING
    if operand.name not in FIELD_TYPES:
        raise ExecutionError(f"unknown field {operand.name!r}")
    return FIELD_TYPES[operand.name]


def _operand_label(operand: FieldRef | ElementPath) -> str:
    return operand.name if isinstance(operand, FieldRef) else f"$.{operand.attr}"


def _check_comparison(node: Comparison, each_field: str | None) -> None:
    kind = _operand_kind(node.left, each_field)
    label = _operand_label(node.left)
    right = node.right
    if kind == TIMESTAMP:
        if isinstance(right, RelativeDate):
            return
        if isinstance(right.value, str):
            try:
                parse_timestamp(right.value)
            except ValueError:
                raise TypeMismatch(label, f"{right.value!r} is not a timestamp") from None
            return
        raise TypeMismatch(label, "timestamp compared with a non-timestamp literal")
    if isinstance(right, RelativeDate):
        raise TypeMismatch(label, "date('now', ...) compared with a non-timestamp field")
    value = right.value
    ok = (
        (kind == STRING and isinstance(value, str))
        or (kind == BOOL and isinstance(value, bool))
        or (kind == INT and isinstance(value, (int, float)) and not isinstance(value, bool))
    )
    if not ok:
        raise TypeMismatch(label, f"{kind} field compared with {type(value).__name__} literal")


def check_program(program: DslProgram, indexes: Mapping[str, FieldIndex]) -> None:
    """Reject programs that would fault at runtime, independently of the data."""
    sql = program.sql
    if sql.each_field is not None and sql.each_field not in ELEMENT_ATTRIBUTES:
        raise NotAListField(sql.each_field)
    if isinstance(sql.projection, ElementProjection):
        _operand_kind(ElementPath(sql.projection.attr), sql.each_field)
    for node in iter_nodes(sql.predicate):
        if isinstance(node, Comparison):
            _check_comparison(node, sql.each_field)
        elif isinstance(node, Membership):
            if _operand_kind(node.target, sql.each_field) != STRING:
                raise TypeMismatch(_operand_label(node.target), "IN <vector_k> needs a string-valued operand")
    for q in program.vector_query_list:
        if q.field not in indexes:
            raise ExecutionError(f"field {q.field!r} is not vector-searchable")


# evaluation ------------------------------------------------------------------


def _operand_value(operand: FieldRef | ElementPath, row: Row):
    if isinstance(operand, ElementPath):
        if row.element is None:
            raise ExecutionError("json_extract evaluated on a row without a json_each element")
        return getattr(row.element, operand.attr, None)
    try:
        return getattr(row.record, operand.name)
    except AttributeError:
        raise ExecutionError(f"unknown field {operand.name!r}") from None


def _resolve_right(node: Comparison, now: datetime):
    right = node.right
    if isinstance(right, RelativeDate):
        return now.replace(microsecond=0) + timedelta(days=right.days)
    kind = FIELD_TYPES.get(node.left.name) if isinstance(node.left, FieldRef) else STRING
    if kind == TIMESTAMP:
        return parse_timestamp(right.value)
    return right.value


def evaluate_predicate(
    node: Expr,
    row: Row,
    bindings: Mapping[int, CandidateBinding | frozenset[str]],
    now: datetime,
) -> bool:
    """Two-valued evaluation; any comparison touching an absent value is false."""
    if isinstance(node, And):
        return all(evaluate_predicate(e, row, bindings, now) for e in node.items)
    if isinstance(node, Or):
        return any(evaluate_predicate(e, row, bindings, now) for e in node.items)
    if isinstance(node, BoolConst):
        return node.value
    if isinstance(node, Membership):
        value = _operand_value(node.target, row)
        if value is None:
            return False
        if not isinstance(value, str):
            raise TypeMismatch(_operand_label(node.target), "IN <vector_k> needs a string-valued operand")
        binding = bindings[node.placeholder]
        keys = binding.keys if isinstance(binding, CandidateBinding) else binding
        return value in keys
    if isinstance(node, Comparison):
        left = _operand_value(node.left, row)
        if left is None:
            return False
        right = _resolve_right(node, now)
        if isinstance(left, (tuple, list)) or isinstance(left, bool) != isinstance(right, bool):
            raise TypeMismatch(_operand_label(node.left))
        try:
            return bool(_OPS[node.op](left, right))
        except TypeError:
            raise TypeMismatch(_operand_label(node.left)) from None
    raise ExecutionError(f"unsupported predicate node {type(node).__name__}")


def run_vector_queries(program: DslProgram, ctx: ExecutionContext) -> dict[int, CandidateBinding]:
    bindings = {}
    for k, q in enumerate(program.vector_query_list):
        index = ctx.indexes.get(q.field)
        if index is None:
            raise ExecutionError(f"field {q.field!r} is not vector-searchable")
        bindings[k] = search(index, q, ctx.embedder, top_k=ctx.top_k, tau=ctx.tau, placeholder_index=k)
    return bindings


def _row_score(row: Row, score_maps: list[tuple[CandidateBinding, dict[str, float]]], each_field: str | None) -> float | None:
    best = None
    for b, scores in score_maps:
        if b.granularity is Granularity.MESSAGE:
            key = row.record.message_id
        elif row.element is not None and b.field == each_field:
            key = row.element.id
        else:
            continue
        score = scores.get(key)
        if score is not None and (best is None or score > best):
            best = score
    return best


def execute(program: DslProgram, ctx: ExecutionContext) -> RetrievalResult:
    """Run ``program`` against ``ctx``; raises ExecutionError on runtime faults."""
    started = time.perf_counter()
    sql = program.sql
    check_program(program, ctx.indexes)
    bindings = run_vector_queries(program, ctx)
    score_maps = [(b, b.scores()) for b in bindings.values()]
    key_sets = {k: b.keys for k, b in bindings.items()}

    first_seen: dict[str, int] = {}
    best: dict[str, float | None] = {}
    for record in ctx.corpus.records:
        rows = expand_json_each(record, sql.each_field) if sql.each_field else [Row(record)]
        for row in rows:
            if sql.predicate is not None and not evaluate_predicate(sql.predicate, row, key_sets, ctx.now):
                continue
            if isinstance(sql.projection, ElementProjection):
                key = getattr(row.element, sql.projection.attr)
            else:
                key = record.message_id
            score = _row_score(row, score_maps, sql.each_field)
            if key not in first_seen:
                first_seen[key] = len(first_seen)
                best[key] = score
            elif score is not None and (best[key] is None or score > best[key]):
                best[key] = score

    scored = sorted((k for k in first_seen if best[k] is not None), key=lambda k: (-best[k], first_seen[k]))
    unscored = [k for k in first_seen if best[k] is None]
    keys = tuple(scored + unscored)
    latency_ms = (time.perf_counter() - started) * 1000.0
    return RetrievalResult(
        keys=keys,
        scores=tuple(best[k] for k in keys),
        latency_ms=latency_ms,
        trace={f"vector_{k}": len(b.hits) for k, b in bindings.items()},
    )
