"""Composite rule-based reward R = S_f + S_e + S_r + S_l for generated programs.

S_f rewards tag discipline, S_e executability, S_r set overlap with a
reference (F1) and S_l penalises outputs past a whitespace-token budget.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

from .dsl.ast import DslProgram
from .dsl.parser import parse_program
from .dsl.tags import extract_tagged_query
from .errors import DslError, EmptyReference, ExecutionError
from .executor import ExecutionContext, RetrievalResult, execute

FAIL_NO_TAG = "format"
FAIL_PARSE = "parse"
FAIL_EXEC = "execution"


@dataclass(frozen=True)
class RewardConfig:
    length_budget: int = 256
    length_penalty_floor: float = -1.0
    partial_format_credit: float = 0.5
    w_format: float = 1.0
    w_execution: float = 1.0
    w_result: float = 1.0
    w_length: float = 1.0

    def __post_init__(self) -> None:
        if self.length_budget <= 0:
            raise ValueError("length_budget must be positive")
        if self.length_penalty_floor > 0:
            raise ValueError("length_penalty_floor must be <= 0")
        if not 0.0 <= self.partial_format_credit <= 1.0:
            raise ValueError("partial_format_credit must lie in [0, 1]")


@dataclass(frozen=True)
class RewardBreakdown:
    """Weighted components; ``total`` is their sum in the fixed order f, e, r, l."""

    s_f: float
    s_e: float
    s_r: float
    s_l: float
    total: float
    failure: str | None = None
    n_tokens: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ParsedOutput:
    program: DslProgram | None
    tagged: bool
    error: str | None


def parse_output(output: str) -> ParsedOutput:
    """Extract and parse the tagged program; never raises on malformed input."""
    try:
        body = extract_tagged_query(output)
    except DslError as exc:
        return ParsedOutput(None, False, f"{FAIL_NO_TAG}: {exc}")
    try:
        return ParsedOutput(parse_program(body), True, None)
    except DslError as exc:
        return ParsedOutput(None, True, f"{FAIL_PARSE}: {exc}")


def format_reward(output: str, config: RewardConfig = RewardConfig()) -> float:
    parsed = parse_output(output)
    if parsed.program is not None:
        return 1.0
    return config.partial_format_credit if parsed.tagged else 0.0


def execution_reward(output: str, ctx: ExecutionContext) -> float:
    program = parse_output(output).program
    if program is None:
        return 0.0
    try:
        execute(program, ctx)
    except ExecutionError:
        return 0.0
    return 1.0


def f1_score(retrieved: Iterable[str], reference: Iterable[str]) -> float:
    ref = set(reference)
    if not ref:
        raise EmptyReference("reference set must be nonempty")
    got = set(retrieved)
    tp = len(got & ref)
    if tp == 0:
        return 0.0
    precision = tp / len(got)
    recall = tp / len(ref)
    return 2 * precision * recall / (precision + recall)


def result_reward(retrieved: RetrievalResult | Iterable[str], reference: Iterable[str]) -> float:
    keys = retrieved.keys if isinstance(retrieved, RetrievalResult) else retrieved
    return f1_score(keys, reference)


def count_tokens(output: str) -> int:
    return len(output.split())


def length_reward(output: str, config: RewardConfig = RewardConfig()) -> float:
    n = count_tokens(output)
    budget = config.length_budget
    if n <= budget:
        return 0.0
    return max(config.length_penalty_floor, -(n - budget) / budget)


def total_reward(
    output: str,
    ctx: ExecutionContext,
    reference: Iterable[str],
    config: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    """Score one output. Execution is skipped entirely when parsing fails."""
    reference = set(reference)
    if not reference:
        raise EmptyReference("reference set must be nonempty")
    parsed = parse_output(output)
    failure = parsed.error.split(":")[0] if parsed.error else None
    s_e = s_r = 0.0
    if parsed.program is not None:
        s_f = 1.0
        try:
            result = execute(parsed.program, ctx)
        except ExecutionError:
            failure = FAIL_EXEC
        else:
            s_e = 1.0
            s_r = result_reward(result, reference)
    else:
        s_f = config.partial_format_credit if parsed.tagged else 0.0
    s_l = length_reward(output, config)

    f = config.w_format * s_f
    e = config.w_execution * s_e
    r = config.w_result * s_r
    ln = config.w_length * s_l
    return RewardBreakdown(f, e, r, ln, f + e + r + ln, failure, count_tokens(output))
