from __future__ import annotations

import json
import math
import random

import pytest

from hybrid_dsl.errors import EmptyReference
from hybrid_dsl.executor import ExecutionContext, execute
from hybrid_dsl.dsl.parser import parse_program
from hybrid_dsl.reward import (
    RewardConfig,
    count_tokens,
    execution_reward,
    f1_score,
    format_reward,
    length_reward,
    parse_output,
    result_reward,
    total_reward,
)

from conftest import CASE1, case1_corpus
from oracles import fuzz_rewards

CASE1_OUTPUT = "<think>starred drafts about budgets</think><query>" + json.dumps(CASE1) + "</query>"


@pytest.fixture(scope="module")
def case1_ctx():
    return ExecutionContext.build(case1_corpus())


# format ----------------------------------------------------------------------


def test_format_examples():
    assert format_reward(CASE1_OUTPUT) == 1.0
    assert format_reward("<query>not json</query>") == 0.5
    assert format_reward("no tags at all") == 0.0
    assert format_reward("<query>a</query><query>b</query>") == 0.0
    assert format_reward("<query>{}") == 0.0


def test_partial_credit_configurable():
    assert format_reward("<query>not json</query>", RewardConfig(partial_format_credit=0.0)) == 0.0


def test_parse_output_reports_stage():
    assert parse_output("plain").error.startswith("format")
    assert parse_output("<query>{</query>").error.startswith("parse")
    assert parse_output(CASE1_OUTPUT).error is None


# execution -------------------------------------------------------------------


def test_execution_examples(case1_ctx):
    assert execution_reward(CASE1_OUTPUT, case1_ctx) == 1.0
    bad = dict(CASE1, sql=CASE1["sql"].replace("is_starred", "is_pinned"))
    assert execution_reward("<query>" + json.dumps(bad) + "</query>", case1_ctx) == 0.0
    assert execution_reward("<query>nope</query>", case1_ctx) == 0.0


# result ----------------------------------------------------------------------


def test_f1_examples():
    assert f1_score({"a", "b"}, {"a", "b"}) == 1.0
    assert abs(f1_score({"a"}, {"a", "b"}) - 2 / 3) < 1e-9
    assert f1_score({"c"}, {"a", "b"}) == 0.0
    assert f1_score(set(), {"a"}) == 0.0
    assert abs(f1_score({"a", "b", "c"}, {"a", "d"}) - 0.4) < 1e-9


def test_f1_requires_reference():
    with pytest.raises(EmptyReference):
        f1_score({"a"}, set())
    with pytest.raises(EmptyReference):
        total_reward("x", None, [])


def test_result_reward_accepts_result(case1_ctx):
    result = execute(parse_program(json.dumps(CASE1)), case1_ctx)
    assert result_reward(result, {"c1-m6"}) == pytest.approx(2 / 3, abs=1e-12)


def test_result_monotone_in_overlap():
    rng = random.Random(0)
    universe = [f"k{i}" for i in range(20)]
    for _ in range(500):
        ref = set(rng.sample(universe, rng.randint(1, 8)))
        got = set(rng.sample(universe, rng.randint(0, 8)))
        missing = sorted(ref - got)
        if not missing:
            continue
        # swapping a wrong key for a reference key never lowers F1
        wrong = sorted(got - ref)
        better = (got - {wrong[0]} if wrong else got) | {missing[0]}
        assert f1_score(better, ref) >= f1_score(got, ref)


# length ----------------------------------------------------------------------


def test_length_examples():
    cfg = RewardConfig(length_budget=10)
    assert length_reward(" ".join(["w"] * 10), cfg) == 0.0
    assert length_reward(" ".join(["w"] * 20), cfg) == -1.0
    assert length_reward(" ".join(["w"] * 15), cfg) == -0.5
    assert length_reward(" ".join(["w"] * 40), cfg) == -1.0
    assert length_reward("", cfg) == 0.0
    assert length_reward(" ".join(["w"] * 40), RewardConfig(length_budget=10, length_penalty_floor=-2.0)) == -2.0


def test_length_monotone():
    cfg = RewardConfig(length_budget=8)
    values = [length_reward(" ".join(["w"] * n), cfg) for n in range(40)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_token_count_whitespace():
    assert count_tokens("a  b\tc\nd") == 4
    assert count_tokens("   ") == 0


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(length_budget=0)
    with pytest.raises(ValueError):
        RewardConfig(length_penalty_floor=0.5)
    with pytest.raises(ValueError):
        RewardConfig(partial_format_credit=1.5)


# total -----------------------------------------------------------------------


def test_total_examples(case1_ctx):
    perfect = total_reward(CASE1_OUTPUT, case1_ctx, {"c1-m6", "c1-m1"})
    assert (perfect.s_f, perfect.s_e, perfect.s_r, perfect.s_l, perfect.total) == (1.0, 1.0, 1.0, 0.0, 3.0)
    assert perfect.failure is None
    garbage = total_reward("just words", case1_ctx, {"c1-m6"})
    assert garbage.total == 0.0 and garbage.failure == "format"
    disjoint = total_reward(CASE1_OUTPUT, case1_ctx, {"c1-m3"})
    assert disjoint.total == 2.0


def test_execution_failure_tagged(case1_ctx):
    bad = dict(CASE1, sql=CASE1["sql"].replace("is_starred", "is_pinned"))
    b = total_reward("<query>" + json.dumps(bad) + "</query>", case1_ctx, {"c1-m6"})
    assert (b.s_f, b.s_e, b.s_r, b.failure) == (1.0, 0.0, 0.0, "execution")


def test_weights_scale_components(case1_ctx):
    cfg = RewardConfig(w_format=2.0, w_result=0.5)
    b = total_reward(CASE1_OUTPUT, case1_ctx, {"c1-m6", "c1-m1"}, cfg)
    assert (b.s_f, b.s_r, b.total) == (2.0, 0.5, 3.5)


def test_fuzz_properties(small_ctx, small_triplets):
    cfg = RewardConfig(length_budget=64)
    seen = set()
    for output, b in fuzz_rewards(small_ctx, small_triplets, 1500, seed=1, cfg=cfg):
        assert b.total == b.s_f + b.s_e + b.s_r + b.s_l
        assert b.s_e in (0.0, 1.0) and 0.0 <= b.s_r <= 1.0 and cfg.length_penalty_floor <= b.s_l <= 0.0
        assert cfg.length_penalty_floor <= b.total <= 3.0
        if parse_output(output).program is None:
            assert b.s_f <= 0.5 and b.s_e == 0.0 and b.s_r == 0.0
        if b.s_e == 0.0:
            assert b.s_r == 0.0
        seen.add(b.failure)
        assert math.isfinite(b.total)
    assert {None, "format", "parse"} <= seen
