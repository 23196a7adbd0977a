"""Sokoban A2C with potential-based reward shaping from A* distances."""

__version__ = "0.1.0"

from .core import (Action, ContractError, Event, Level, RewardConfig, State, StepOutcome,
                   compute_reward, decode, encode, is_solved, step)
from .levels import (LevelSet, generate, generate_set, load_level_set, parse_xsb,
                     save_level_set, serialize_xsb)
from .planner import (ALL_PAIRS, MIN_MATCHING, NEAREST_TARGET, UNSOLVABLE, DistanceCache,
                      PlanResult, distance, heuristic, is_deadlocked_static, solve_astar)
from .shaping import ShapingConfig, ShapedStepOutcome, potential, shaped_step, shaping_bonus
from .agent import A2CHyper, PolicyParams, RolloutBatch, a2c_loss, forward, n_step_returns, rmsprop_step
from .harness import ExperimentConfig, MetricsRow, evaluate, shortest_path_stats, train

__all__ = [
    "Action", "ContractError", "Event", "Level", "RewardConfig", "State", "StepOutcome",
    "compute_reward", "decode", "encode", "is_solved", "step",
    "LevelSet", "generate", "generate_set", "load_level_set", "parse_xsb", "save_level_set",
    "serialize_xsb",
    "ALL_PAIRS", "MIN_MATCHING", "NEAREST_TARGET", "UNSOLVABLE", "DistanceCache", "PlanResult",
    "distance", "heuristic", "is_deadlocked_static", "solve_astar",
    "ShapingConfig", "ShapedStepOutcome", "potential", "shaped_step", "shaping_bonus",
    "A2CHyper", "PolicyParams", "RolloutBatch", "a2c_loss", "forward", "n_step_returns",
    "rmsprop_step",
    "ExperimentConfig", "MetricsRow", "evaluate", "shortest_path_stats", "train",
]
