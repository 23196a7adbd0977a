"""Training loop, evaluation, and experiment bookkeeping.

One training run collects ``rollout_len`` steps from ``n_envs`` environments,
shapes each reward with the A* distance, applies one A2C update, and evaluates
the greedy policy every ``eval_every`` environment steps.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .agent import (A2CHyper, PolicyParams, RolloutBatch, a2c_loss, atari_architecture,
                    clip_grad_norm, desk_architecture, forward, greedy_actions, init_params,
                    rmsprop_step, sample_actions, save_checkpoint)
from .core import STEP_CAP, Action, State, encode, pad_observation, step
from .levels import LevelError, LevelSet, generate_set, load_level_set
from .planner import MIN_MATCHING, DistanceCache, Solved, solve_astar
from .shaping import ShapingConfig, shaped_step

log = logging.getLogger(__name__)

METRICS_HEADER = ("seed", "env_steps", "solved_ratio", "mean_return", "mean_ep_len",
                  "wall_clock_sec", "shaped")


@dataclass(frozen=True)
class ExperimentConfig:
    # level set: a manifest/XSB path, or generation parameters when levels_path is None
    levels_path: Optional[str] = None
    n_boxes: int = 1
    n_levels: int = 20
    level_height: int = 7
    level_width: int = 7
    max_pulls: int = 30
    level_seed: int = 0
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    hyper: A2CHyper = field(default_factory=A2CHyper)
    total_env_steps: int = 80_000
    eval_every: int = 1000
    eval_instances: int = 20
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    step_cap: int = STEP_CAP
    obs_mode: str = "symbolic"
    # give the critic its own conv/fc trunk instead of sharing the policy's
    separate_critic: bool = False
    checkpoints: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.total_env_steps < 0:
            raise ValueError("total_env_steps must be >= 0")
        if self.eval_every < 1 or self.eval_instances < 1:
            raise ValueError("eval_every and eval_instances must be >= 1")
        if self.obs_mode not in ("symbolic", "pixel"):
            raise ValueError(f"unknown obs_mode {self.obs_mode!r}")

    def load_levels(self) -> LevelSet:
        if self.levels_path:
            level_set = load_level_set(self.levels_path)
        else:
            level_set = generate_set(self.level_seed, self.n_levels, self.n_boxes,
                                     self.level_height, self.level_width, self.max_pulls)
        if self.eval_instances > len(level_set):
            raise LevelError(f"eval_instances={self.eval_instances} exceeds the "
                             f"{len(level_set)} levels in the set")
        return level_set

    def flat(self) -> Dict[str, object]:
        """Flat key -> value mapping; nested shaping/hyper fields are inlined."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                out.update(dataclasses.asdict(value) if f.name == "hyper" else
                           {("shaping" if k == "enabled" else k): v
                            for k, v in dataclasses.asdict(value).items() if k != "gamma"})
            else:
                out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.flat(), sort_keys=True).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    env_steps: int
    solved_ratio: float
    mean_return: float
    mean_ep_len: float
    wall_clock_sec: float
    shaped: bool

    def csv_fields(self) -> List[str]:
        return [str(self.seed), str(self.env_steps), f"{self.solved_ratio:.4f}",
                f"{self.mean_return:.4f}", f"{self.mean_ep_len:.2f}",
                f"{self.wall_clock_sec:.2f}", str(int(self.shaped))]


def reproducibility_header(config: ExperimentConfig, seed=None) -> str:
    parts = [f"sokoshape {__version__}", f"config={config.digest()}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    return " ".join(parts)


def metrics_csv(rows: Sequence[MetricsRow], header_comment: str = "") -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def read_metrics_csv(path) -> List[MetricsRow]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        rows.append(MetricsRow(int(rec["seed"]), int(rec["env_steps"]), float(rec["solved_ratio"]),
                               float(rec["mean_return"]), float(rec["mean_ep_len"]),
                               float(rec["wall_clock_sec"]), rec["shaped"] == "1"))
    return rows


# --- observation helpers ----------------------------------------------------

def observation_shape(level_set: LevelSet, obs_mode: str = "symbolic") -> Tuple[int, int, int]:
    h = max(lvl.height for lvl in level_set)
    w = max(lvl.width for lvl in level_set)
    if obs_mode == "pixel":
        return 3, 8 * h, 8 * w
    return 7, h, w


def make_observer(level_set: LevelSet, obs_mode: str = "symbolic"):
    _, h, w = observation_shape(level_set, obs_mode)

    def observe(state: State) -> np.ndarray:
        return pad_observation(encode(state, obs_mode), h, w)
    return observe


def default_architecture(level_set: LevelSet, obs_mode: str = "symbolic",
                         separate_critic: bool = False) -> dict:
    shape = observation_shape(level_set, obs_mode)
    arch = desk_architecture(shape) if obs_mode == "symbolic" else atari_architecture(shape)
    if separate_critic:
        arch["separate_critic"] = True
    return arch


# --- evaluation -------------------------------------------------------------

Policy = Callable[[List[State], np.ndarray], np.ndarray]


def greedy_policy(params: PolicyParams) -> Policy:
    def act(states, obs):
        logits, _ = forward(params, obs)
        return greedy_actions(logits)
    return act


def evaluate(params: Optional[PolicyParams], level_set: LevelSet, n: int,
             rng, step_cap: int = STEP_CAP, obs_mode: str = "symbolic",
             policy: Optional[Policy] = None) -> Dict[str, float]:
    """Run a deterministic policy on ``n`` levels drawn without replacement.

    Defaults to the greedy policy of ``params``.  Scores raw (unshaped) rewards.
    ``rng`` may be a Generator or a seed.
    """
    if n > len(level_set):
        raise LevelError(f"cannot draw {n} evaluation levels from a set of {len(level_set)}")
    rng = np.random.default_rng(rng)
    if policy is None:
        policy = greedy_policy(params)
    observe = make_observer(level_set, obs_mode)
    picks = rng.choice(len(level_set), size=n, replace=False)
    states = [level_set[int(i)].initial_state() for i in picks]
    returns = np.zeros(n)
    lengths = np.zeros(n, dtype=int)
    solved = np.zeros(n, dtype=bool)
    live = list(range(n))
    while live:
        obs = np.stack([observe(states[i]) for i in live])
        actions = policy([states[i] for i in live], obs)
        still = []
        for i, a in zip(live, actions):
            out = step(states[i], Action(int(a)), step_cap)
            states[i] = out.next_state
            returns[i] += out.reward
            lengths[i] += 1
            if out.solved:
                solved[i] = True
            elif not out.truncated:
                still.append(i)
        live = still
    return {"solved_ratio": float(solved.mean()), "mean_return": float(returns.mean()),
            "mean_ep_len": float(lengths.mean())}


# --- training ---------------------------------------------------------------

class _Envs:
    """Vector of independent episodes; each reset draws a level uniformly."""

    def __init__(self, level_set: LevelSet, n_envs: int, rng: np.random.Generator):
        self.level_set = level_set
        self.rng = rng
        self.states = [self._fresh() for _ in range(n_envs)]

    def _fresh(self) -> State:
        return self.level_set[int(self.rng.integers(len(self.level_set)))].initial_state()

    def reset(self, i: int) -> None:
        self.states[i] = self._fresh()


def train(config: ExperimentConfig, seed: int, level_set: Optional[LevelSet] = None,
          cache: Optional[DistanceCache] = None, checkpoint_dir: Optional[Path] = None,
          progress: Optional[Callable[[MetricsRow], None]] = None,
          on_update: Optional[Callable[[int, dict], None]] = None
          ) -> Tuple[PolicyParams, List[MetricsRow]]:
    """One seeded A2C run. Returns the final parameters and the evaluation rows.

    ``on_update(env_steps, info)`` receives loss terms, the pre-clip gradient norm
    and the number of training episodes solved/truncated during the rollout.
    """
    if level_set is None:
        level_set = config.load_levels()
    shaping, hyper = config.shaping, config.hyper
    if shaping.enabled and cache is None:
        cache = shaping.make_cache()
    init_ss, level_ss, action_ss, eval_ss = np.random.SeedSequence(seed).spawn(4)
    params = init_params(default_architecture(level_set, config.obs_mode, config.separate_critic),
                         np.random.default_rng(init_ss))
    envs = _Envs(level_set, hyper.n_envs, np.random.default_rng(level_ss))
    action_rng = np.random.default_rng(action_ss)
    observe = make_observer(level_set, config.obs_mode)
    started = time.perf_counter()
    rows: List[MetricsRow] = []

    def record(env_steps):
        eval_rng = np.random.default_rng([eval_ss.entropy, len(rows)])
        stats = evaluate(params, level_set, config.eval_instances, eval_rng,
                         config.step_cap, config.obs_mode)
        row = MetricsRow(seed, env_steps, stats["solved_ratio"], stats["mean_return"],
                         stats["mean_ep_len"], time.perf_counter() - started, shaping.enabled)
        rows.append(row)
        if progress is not None:
            progress(row)

    record(0)
    n, T = hyper.n_envs, hyper.rollout_len
    obs = np.stack([observe(s) for s in envs.states])
    env_steps, next_eval = 0, config.eval_every
    while env_steps < config.total_env_steps:
        b_obs = np.empty((T,) + obs.shape)
        b_act = np.empty((T, n), dtype=int)
        b_rew = np.zeros((T, n))
        b_val = np.zeros((T, n))
        b_term = np.zeros((T, n), dtype=bool)
        b_trunc = np.zeros((T, n), dtype=bool)
        b_trunc_val = np.zeros((T, n))
        trunc_obs = []
        n_solved = n_trunc = 0
        for t in range(T):
            logits, values = forward(params, obs)
            actions = sample_actions(logits, action_rng)
            b_obs[t], b_act[t], b_val[t] = obs, actions, values
            next_obs = []
            for i in range(n):
                out = shaped_step(envs.states[i], Action(int(actions[i])), shaping, cache,
                                  config.step_cap)
                b_rew[t, i] = out.shaped_reward
                if out.inner.solved:
                    b_term[t, i] = True
                    n_solved += 1
                    envs.reset(i)
                elif out.inner.truncated:
                    b_trunc[t, i] = True
                    n_trunc += 1
                    trunc_obs.append((t, i, observe(out.next_state)))
                    envs.reset(i)
                else:
                    envs.states[i] = out.next_state
                next_obs.append(observe(envs.states[i]))
            obs = np.stack(next_obs)
            env_steps += n
        if trunc_obs:
            _, tvals = forward(params, np.stack([o for _, _, o in trunc_obs]))
            for (t, i, _), v in zip(trunc_obs, tvals):
                b_trunc_val[t, i] = v
        _, bootstrap = forward(params, obs)
        batch = RolloutBatch(b_obs, b_act, b_rew, b_val, b_term, b_trunc, b_trunc_val, bootstrap)
        _, grads, info = a2c_loss(params, batch, hyper)
        grads, grad_norm = clip_grad_norm(grads, hyper.max_grad_norm)
        params = rmsprop_step(params, grads, hyper)
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after update at {env_steps} steps: {info}")
        if on_update is not None:
            on_update(env_steps, dict(info, grad_norm=grad_norm, solved=n_solved,
                                      truncated=n_trunc))
        while next_eval <= config.total_env_steps and env_steps >= next_eval:
            record(next_eval)
            next_eval += config.eval_every
    if checkpoint_dir is not None:
        save_checkpoint(params, Path(checkpoint_dir) / f"seed{seed}_final.npz",
                        meta={"seed": seed, "env_steps": env_steps, "config": config.digest(),
                              "header": reproducibility_header(config, seed)})
    if cache is not None and cache.budget_events:
        log.warning("%d distance queries hit the A* node budget", cache.budget_events)
    return params, rows


def run_experiment(config: ExperimentConfig, out_dir, level_set: Optional[LevelSet] = None,
                   cache: Optional[DistanceCache] = None,
                   progress: Optional[Callable[[MetricsRow], None]] = None
                   ) -> Dict[int, Tuple[PolicyParams, List[MetricsRow]]]:
    """Train every seed in the config, writing one metrics CSV per seed and a summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if level_set is None:
        level_set = config.load_levels()
    if cache is None and config.shaping.enabled:
        cache = config.shaping.make_cache()
    tag = "shaped" if config.shaping.enabled else "unshaped"
    results = {}
    for seed in config.seeds:
        ckpt_dir = None
        if config.checkpoints:
            ckpt_dir = out_dir / "checkpoints"
            ckpt_dir.mkdir(exist_ok=True)
        params, rows = train(config, seed, level_set, cache, ckpt_dir, progress)
        (out_dir / f"metrics_{tag}_seed{seed}.csv").write_text(
            metrics_csv(rows, reproducibility_header(config, seed)), encoding="utf-8")
        results[seed] = (params, rows)
    summary = {"header": reproducibility_header(config), "shaped": config.shaping.enabled,
               "final": {str(s): dataclasses.asdict(rows[-1]) for s, (_, rows) in results.items()}}
    (out_dir / f"summary_{tag}.txt").write_text(json.dumps(summary, indent=2) + "\n",
                                                encoding="utf-8")
    return results


# --- level statistics -------------------------------------------------------

class UnsolvableLevelError(LevelError):
    """A level that must be solvable has no plan (or none within the node budget)."""


@dataclass(frozen=True)
class ShortestPathStats:
    level_ids: Tuple[str, ...]
    lengths: Tuple[int, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.lengths))

    def histogram(self) -> Dict[int, int]:
        values, counts = np.unique(self.lengths, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def to_csv(self, header_comment: str = "") -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("index", "level_id", "length"))
        for i, (lid, length) in enumerate(zip(self.level_ids, self.lengths)):
            writer.writerow((i, lid, length))
        return buf.getvalue()


def shortest_path_stats(level_set, node_budget: Optional[int] = None) -> ShortestPathStats:
    """Optimal solution length of every level (admissible A*); duplicates count twice."""
    ids, lengths = [], []
    for i, level in enumerate(level_set):
        result = solve_astar(level.initial_state(), MIN_MATCHING, node_budget)
        if not isinstance(result.status, Solved):
            raise UnsolvableLevelError(f"level #{i} ({level.id}) has no solution within the node budget: "
                             f"{type(result.status).__name__}")
        ids.append(level.id)
        lengths.append(result.length)
    return ShortestPathStats(tuple(ids), tuple(lengths))


def first_crossing(rows: Sequence[MetricsRow], threshold: float) -> Optional[int]:
    """Env steps of the first evaluation with solved_ratio >= threshold."""
    for row in rows:
        if row.solved_ratio >= threshold:
            return row.env_steps
    return None
