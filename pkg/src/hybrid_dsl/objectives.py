"""Group-relative advantages and clipped policy objectives (GRPO, DAPO).

Losses are computed from per-token log-probabilities with numpy. Each loss
has an analytic gradient with respect to the policy log-probabilities so it
can be checked against finite differences; nothing here updates parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GroupTooSmall, ShapeMismatch


@dataclass(frozen=True)
class ObjectiveConfig:
    clip_eps: float = 0.2
    clip_lo: float = 0.2
    clip_hi: float = 0.28
    kl_beta: float = 0.04
    advantage_eps: float = 1e-6
    dapo_scale: float = 2.0  # literal leading factor of the DAPO objective; set 1.0 to drop it

    def __post_init__(self) -> None:
        if min(self.clip_eps, self.clip_lo, self.clip_hi) <= 0:
            raise ValueError("clip bounds must be positive")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.advantage_eps < 0:
            raise ValueError("advantage_eps must be >= 0")


@dataclass(frozen=True)
class RolloutGroup:
    """G candidates for one prompt with per-token log-probs and scalar rewards."""

    logp_policy: tuple[np.ndarray, ...]
    logp_old: tuple[np.ndarray, ...]
    logp_ref: tuple[np.ndarray, ...]
    rewards: np.ndarray

    def __post_init__(self) -> None:
        for name in ("logp_policy", "logp_old", "logp_ref"):
            object.__setattr__(self, name, tuple(np.asarray(x, dtype=np.float64) for x in getattr(self, name)))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64))
        g = len(self.logp_policy)
        if g < 2:
            raise GroupTooSmall(f"group needs at least 2 candidates, got {g}")
        if len(self.logp_old) != g or len(self.logp_ref) != g or self.rewards.shape != (g,):
            raise ShapeMismatch("candidate count differs between log-prob sequences and rewards")
        for i, (p, o, r) in enumerate(zip(self.logp_policy, self.logp_old, self.logp_ref)):
            if p.ndim != 1 or p.size == 0 or p.shape != o.shape or p.shape != r.shape:
                raise ShapeMismatch(f"candidate {i}: log-prob sequences must be nonempty and equal length")

    @property
    def size(self) -> int:
        return len(self.logp_policy)

    @property
    def lengths(self) -> list[int]:
        return [p.size for p in self.logp_policy]

    @property
    def n_tokens(self) -> int:
        return sum(self.lengths)

    def with_policy(self, logp_policy: Sequence[np.ndarray]) -> RolloutGroup:
        return RolloutGroup(tuple(logp_policy), self.logp_old, self.logp_ref, self.rewards)


def group_advantages(rewards: Sequence[float], eps: float = 1e-6) -> np.ndarray:
    """(r - mean) / (population std + eps); exact zeros for zero-variance groups."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise GroupTooSmall(f"group needs at least 2 rewards, got {r.size}")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps)


def kl_estimate(logp_policy: Sequence[float], logp_ref: Sequence[float]) -> float:
    """Mean per-token k3 estimator exp(d) - d - 1 with d = logp_ref - logp_policy."""
    p = np.asarray(logp_policy, dtype=np.float64)
    r = np.asarray(logp_ref, dtype=np.float64)
    if p.shape != r.shape:
        raise ShapeMismatch("logp_policy and logp_ref differ in length")
    if p.size == 0:
        return 0.0
    d = r - p
    return float(np.mean(np.expm1(d) - d))


def _clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """min(ratio*A, clip(ratio)*A) and a mask marking where the unclipped term is active."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - lo, 1.0 + hi) * adv
    active = unclipped <= clipped
    return np.where(active, unclipped, clipped), active


def _group_kl(group: RolloutGroup) -> tuple[float, list[np.ndarray]]:
    n = group.n_tokens
    total = 0.0
    grads = []
    for p, r in zip(group.logp_policy, group.logp_ref):
        d = r - p
        total += float(np.sum(np.expm1(d) - d))
        grads.append((1.0 - np.exp(d)) / n)
    return total / n, grads


def grpo_loss_and_grad(group: RolloutGroup, config: ObjectiveConfig = ObjectiveConfig()) -> tuple[float, list[np.ndarray]]:
    adv = group_advantages(group.rewards, config.advantage_eps)
    log_ratio = np.array([np.sum(p - o) for p, o in zip(group.logp_policy, group.logp_old)])
    ratio = np.exp(log_ratio)
    surr, active = _clipped_surrogate(ratio, adv, config.clip_eps, config.clip_eps)
    g = group.size
    kl, kl_grads = _group_kl(group)
    loss = -float(np.sum(surr)) / g + config.kl_beta * kl
    # d ratio_i / d logp_{i,t} = ratio_i for every token of candidate i.
    grads = [
        np.full(p.shape, -(ratio[i] * adv[i] if active[i] else 0.0) / g) + config.kl_beta * kl_grads[i]
        for i, p in enumerate(group.logp_policy)
    ]
    return loss, grads


def dapo_loss_and_grad(group: RolloutGroup, config: ObjectiveConfig = ObjectiveConfig()) -> tuple[float, list[np.ndarray]]:
    adv = group_advantages(group.rewards, config.advantage_eps)
    n = group.n_tokens
    total = 0.0
    grads = []
    for i, (p, o) in enumerate(zip(group.logp_policy, group.logp_old)):
        ratio = np.exp(p - o)
        surr, active = _clipped_surrogate(ratio, np.full(p.shape, adv[i]), config.clip_lo, config.clip_hi)
        total += float(np.sum(surr))
        grads.append(-config.dapo_scale * np.where(active, ratio * adv[i], 0.0) / n)
    return -config.dapo_scale * total / n + 0.0, grads


def grpo_loss(group: RolloutGroup, config: ObjectiveConfig = ObjectiveConfig()) -> float:
    return grpo_loss_and_grad(group, config)[0]


def dapo_loss(group: RolloutGroup, config: ObjectiveConfig = ObjectiveConfig()) -> float:
    return dapo_loss_and_grad(group, config)[0]
