"""Simulated rollout loop: sample candidates, execute, reward, compute losses.

A mock policy stands in for the language model. It emits the gold program
for a triplet, optionally corrupted in one of several ways, together with
synthetic per-token log-probabilities. Each step exercises the full
extract -> parse -> execute -> reward -> advantage -> loss path without any
training.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .dsl.ast import And, Comparison, DslProgram, FieldQuery, FieldRef, Literal
from .dsl.render import program_to_wire
from .dsl.tags import wrap_query
from .datagen import FILLER, TripletInstance
from .errors import EmptyInput
from .executor import ExecutionContext, execute
from .objectives import ObjectiveConfig, RolloutGroup, dapo_loss, group_advantages, grpo_loss
from .reward import RewardConfig, total_reward

# unknown_field: parses but fails the executor's field check
# dangling: an unreferenced vector query, rejected by the parser
# negated: one filter inverted, so the result set misses the reference
# garbage: free text with no tags
# verbose: the gold program buried in padding past the length budget
CORRUPTIONS = ("unknown_field", "dangling", "negated", "garbage", "verbose")

_NEGATE = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


@dataclass(frozen=True)
class Candidate:
    text: str
    kind: str


def _emit(program: DslProgram, reasoning: str) -> str:
    body = json.dumps(program_to_wire(program), ensure_ascii=False)
    return f"<think>{reasoning}</think>\n{wrap_query(body)}"


def _negate_first_filter(program: DslProgram) -> DslProgram:
    pred = program.sql.predicate
    items = list(pred.items) if isinstance(pred, And) else [pred]
    for i, item in enumerate(items):
        if isinstance(item, Comparison):
            items[i] = replace(item, op=_NEGATE[item.op])
            break
    else:
        return program
    new_pred = And(tuple(items)) if len(items) > 1 else items[0]
    return replace(program, sql=replace(program.sql, predicate=new_pred))


def _with_unknown_field(program: DslProgram) -> DslProgram:
    extra = Comparison(FieldRef("priority"), "=", Literal("high"))
    pred = program.sql.predicate
    items = (pred.items if isinstance(pred, And) else (pred,)) + (extra,)
    return replace(program, sql=replace(program.sql, predicate=And(items)))


def corrupt(triplet: TripletInstance, kind: str, rng: random.Random, length_budget: int) -> str:
    reasoning = f"The user asks: {triplet.nl_query}"
    program = triplet.program
    if kind == "gold":
        return _emit(program, reasoning)
    if kind == "unknown_field":
        return _emit(_with_unknown_field(program), reasoning)
    if kind == "dangling":
        extra = FieldQuery("subject", rng.choice(FILLER))
        return _emit(replace(program, vector_query_list=program.vector_query_list + (extra,)), reasoning)
    if kind == "negated":
        return _emit(_negate_first_filter(program), reasoning)
    if kind == "garbage":
        return " ".join(rng.choice(FILLER) for _ in range(rng.randint(5, 40)))
    if kind == "verbose":
        padding = " ".join(rng.choice(FILLER) for _ in range(length_budget + rng.randint(1, length_budget)))
        return _emit(program, f"{reasoning} {padding}")
    raise ValueError(f"unknown corruption kind {kind!r}")


@dataclass(frozen=True)
class MockPolicy:
    """Emits the gold program, corrupted with probability ``corruption_rate``."""

    corruption_rate: float = 0.0
    corruptions: tuple[str, ...] = CORRUPTIONS

    def __post_init__(self) -> None:
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must lie in [0, 1]")
        if not self.corruptions:
            raise ValueError("at least one corruption kind is required")

    def sample(self, triplet: TripletInstance, group_size: int, rng: random.Random, length_budget: int) -> list[Candidate]:
        out = []
        for _ in range(group_size):
            kind = rng.choice(self.corruptions) if rng.random() < self.corruption_rate else "gold"
            out.append(Candidate(corrupt(triplet, kind, rng, length_budget), kind))
        return out


def named_policy(name: str, corruption_rate: float = 0.3) -> MockPolicy:
    if name == "gold":
        return MockPolicy(0.0)
    if name == "garbage":
        return MockPolicy(1.0, ("garbage",))
    if name == "perturbed":
        return MockPolicy(1.0, tuple(k for k in CORRUPTIONS if k != "garbage"))
    if name == "mixture":
        return MockPolicy(corruption_rate)
    raise ValueError(f"unknown policy {name!r}; expected gold, perturbed, garbage or mixture")


def synthetic_logprobs(n_tokens: int, rng: np.random.Generator, drift: float = 0.05) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(policy, old, reference) per-token log-probs, all <= 0 and close to each other."""
    old = -rng.exponential(0.5, size=n_tokens)
    policy = np.minimum(old + rng.normal(0.0, drift, size=n_tokens), 0.0)
    ref = np.minimum(old + rng.normal(0.0, drift, size=n_tokens), 0.0)
    return policy, old, ref


@dataclass(frozen=True)
class RolloutConfig:
    group_size: int = 8
    batch_size: int = 4
    max_logprob_tokens: int = 16
    reward: RewardConfig = field(default_factory=RewardConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class RolloutEnv:
    """Per-triplet execution contexts and reference sets, computed once."""

    def __init__(self, ctx: ExecutionContext, triplets: Sequence[TripletInstance]):
        if not triplets:
            raise EmptyInput("rollout needs at least one triplet")
        self.ctx = ctx
        self.triplets = list(triplets)
        self._cache: dict[str, tuple[ExecutionContext, frozenset[str]]] = {}

    def resolve(self, t: TripletInstance) -> tuple[ExecutionContext, frozenset[str]]:
        if t.query_id not in self._cache:
            sub = self.ctx.restricted(t.candidate_pool)
            ref = frozenset(execute(t.program, sub).keys) or frozenset({t.gold_id})
            self._cache[t.query_id] = (sub, ref)
        return self._cache[t.query_id]


def simulate_rollout_step(
    env: RolloutEnv,
    policy: MockPolicy,
    config: RolloutConfig = RolloutConfig(),
    seed: int = 0,
    step: int = 0,
) -> dict:
    """One seeded step over a batch of triplets; per-candidate faults become report entries."""
    rng = random.Random(f"rollout:{seed}:{step}")
    np_rng = np.random.default_rng([seed, step])
    batch = rng.sample(env.triplets, min(config.batch_size, len(env.triplets)))
    groups = []
    for t in batch:
        sub, reference = env.resolve(t)
        candidates = policy.sample(t, config.group_size, rng, config.reward.length_budget)
        breakdowns = [total_reward(c.text, sub, reference, config.reward) for c in candidates]
        rewards = np.array([b.total for b in breakdowns])
        logps = [
            synthetic_logprobs(min(max(len(c.text.split()), 1), config.max_logprob_tokens), np_rng)
            for c in candidates
        ]
        group = RolloutGroup(
            tuple(p for p, _, _ in logps), tuple(o for _, o, _ in logps), tuple(r for _, _, r in logps), rewards
        )
        groups.append(
            {
                "query_id": t.query_id,
                "kinds": [c.kind for c in candidates],
                "rewards": rewards.tolist(),
                "advantages": group_advantages(rewards, config.objective.advantage_eps).tolist(),
                "failures": [b.failure for b in breakdowns],
                "grpo_loss": grpo_loss(group, config.objective),
                "dapo_loss": dapo_loss(group, config.objective),
            }
        )
    all_rewards = [r for g in groups for r in g["rewards"]]
    return {
        "step": step,
        "mean_reward": float(np.mean(all_rewards)),
        "grpo_loss": float(np.mean([g["grpo_loss"] for g in groups])),
        "dapo_loss": float(np.mean([g["dapo_loss"] for g in groups])),
        "groups": groups,
    }


def run_rollouts(env: RolloutEnv, policy: MockPolicy, steps: int, config: RolloutConfig = RolloutConfig(), seed: int = 0) -> list[dict]:
    return [simulate_rollout_step(env, policy, config, seed, s) for s in range(steps)]


def corruption_sweep(
    env: RolloutEnv,
    levels: Sequence[float],
    steps: int,
    config: RolloutConfig = RolloutConfig(),
    seed: int = 0,
) -> dict:
    """Mean composite reward per corruption level, plus its rank correlation with the level."""
    if len(levels) < 2:
        raise ValueError("a sweep needs at least two corruption levels")
    means = []
    for level in levels:
        reports = run_rollouts(env, MockPolicy(level), steps, config, seed)
        means.append(float(np.mean([r["mean_reward"] for r in reports])))
    rho = float(spearmanr(levels, means).statistic)
    order = sorted(range(len(levels)), key=lambda i: levels[i])
    decreasing = all(means[order[i]] > means[order[i + 1]] for i in range(len(order) - 1))
    return {
        "levels": list(levels),
        "mean_reward": means,
        "spearman_reward_vs_corruption": rho,
        "strictly_decreasing_in_corruption": decreasing,
    }
