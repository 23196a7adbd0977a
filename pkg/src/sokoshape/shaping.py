"""Potential-based reward shaping with the negative A* distance as potential."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

from .core import STEP_CAP, Action, ContractError, State, StepOutcome, step
from .planner import ALL_PAIRS, TRAINING_NODE_BUDGET, UNSOLVABLE, DistanceCache

log = logging.getLogger(__name__)

Number = Union[int, float]


@dataclass(frozen=True)
class ShapingConfig:
    enabled: bool = True
    heuristic_mode: str = ALL_PAIRS
    # discount the next-state potential (gamma * phi(s') - phi(s)); off reproduces phi(s') - phi(s)
    gamma_in_potential: bool = False
    gamma: float = 0.99
    node_budget: Optional[int] = TRAINING_NODE_BUDGET

    def make_cache(self) -> DistanceCache:
        return DistanceCache(self.heuristic_mode, self.node_budget)


@dataclass(frozen=True)
class ShapedStepOutcome:
    inner: StepOutcome
    bonus: Number
    # None when shaping is disabled and distances were not queried
    s_solvable: Optional[bool]
    s_prime_solvable: Optional[bool]
    shaped_reward: float

    @property
    def next_state(self) -> State:
        return self.inner.next_state


def potential(state: State, cache: DistanceCache) -> int:
    d = cache.distance(state)
    if d is UNSOLVABLE:
        raise ContractError("potential is undefined for an unsolvable state")
    return -d


def shaping_bonus(s_solvable: bool, d_s: Optional[int], s_prime_solvable: bool,
                  d_s_prime: Optional[int], gamma: Optional[float] = None) -> Number:
    """Shaping term F for one transition.

    Both solvable: phi(s') - phi(s) (times gamma on phi(s') if given).
    Solvable into unsolvable: -d(s) - 1.  Both unsolvable: 0.
    """
    if s_solvable and s_prime_solvable:
        if gamma is None:
            return d_s - d_s_prime
        return d_s - gamma * d_s_prime
    if s_solvable:
        return -d_s - 1
    if s_prime_solvable:
        log.warning("transition from an unsolvable to a solvable state; bonus set to 0")
    return 0


def shaped_step(state: State, action: Action, config: ShapingConfig,
                cache: Optional[DistanceCache], step_cap: int = STEP_CAP) -> ShapedStepOutcome:
    inner = step(state, action, step_cap)
    if not config.enabled:
        return ShapedStepOutcome(inner, 0, None, None, inner.reward)
    d_s = cache.distance(state)
    d_next = cache.distance(inner.next_state)
    s_ok, next_ok = d_s is not UNSOLVABLE, d_next is not UNSOLVABLE
    gamma = config.gamma if config.gamma_in_potential else None
    bonus = shaping_bonus(s_ok, d_s, next_ok, d_next, gamma)
    return ShapedStepOutcome(inner, bonus, s_ok, next_ok, inner.reward + bonus)
