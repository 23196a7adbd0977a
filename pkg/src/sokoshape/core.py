"""Deterministic Sokoban engine: board model, push dynamics, rewards, observations.

Cells are ``(row, col)`` tuples.  A :class:`Level` is the immutable board plus the
initial placement; a :class:`State` is the dynamic part (player, boxes, step
counter) and keeps a reference to its level.  :func:`step` is a pure function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import FrozenSet, Iterable, Tuple

import numpy as np

Cell = Tuple[int, int]

STEP_CAP = 120


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


class Action(enum.IntEnum):
    NOOP = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


DELTAS = {
    Action.NOOP: (0, 0),
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}
MOVE_ACTIONS = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
ACTION_LETTERS = {Action.UP: "U", Action.DOWN: "D", Action.LEFT: "L", Action.RIGHT: "R"}
INVERSE = {Action.UP: Action.DOWN, Action.DOWN: Action.UP,
           Action.LEFT: Action.RIGHT, Action.RIGHT: Action.LEFT, Action.NOOP: Action.NOOP}


class Event(enum.Enum):
    BOX_ON_TARGET = "box_on_target"
    BOX_OFF_TARGET = "box_off_target"
    SOLVED = "solved"


@dataclass(frozen=True)
class RewardConfig:
    solved: float = 10.0
    box_on_target: float = 1.0
    box_off_target: float = -1.0
    per_step: float = -0.1


DEFAULT_REWARDS = RewardConfig()


@dataclass(frozen=True)
class Level:
    height: int
    width: int
    walls: FrozenSet[Cell]
    targets: FrozenSet[Cell]
    initial_player: Cell
    initial_boxes: FrozenSet[Cell]
    id: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("walls", "targets", "initial_boxes"):
            object.__setattr__(self, name, frozenset(tuple(c) for c in getattr(self, name)))
        object.__setattr__(self, "initial_player", tuple(self.initial_player))
        self.validate()

    def validate(self) -> None:
        if len(self.targets) < 1 or len(self.initial_boxes) != len(self.targets):
            raise ContractError(
                f"level {self.id!r}: {len(self.initial_boxes)} boxes vs "
                f"{len(self.targets)} targets (need equal and >= 1)")
        cells = set(self.targets) | set(self.initial_boxes) | {self.initial_player}
        for r, c in cells | set(self.walls):
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ContractError(f"level {self.id!r}: cell {(r, c)} out of bounds")
        if cells & self.walls:
            raise ContractError(f"level {self.id!r}: entity or target on a wall")
        if self.initial_player in self.initial_boxes:
            raise ContractError(f"level {self.id!r}: player on a box")

    @property
    def n_boxes(self) -> int:
        return len(self.targets)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_floor(self, cell: Cell) -> bool:
        """Walkable cell: in bounds and not a wall."""
        return cell not in self.walls and self.in_bounds(cell)

    @cached_property
    def floor_cells(self) -> FrozenSet[Cell]:
        return frozenset((r, c) for r in range(self.height) for c in range(self.width)
                         if (r, c) not in self.walls)

    @cached_property
    def _base_symbolic(self) -> np.ndarray:
        base = np.zeros((7, self.height, self.width))
        base[1] = 1.0
        for r, c in self.walls:
            base[:, r, c] = 0.0
            base[0, r, c] = 1.0
        for r, c in self.targets:
            base[1, r, c] = 0.0
            base[2, r, c] = 1.0
        return base

    def initial_state(self) -> "State":
        return State(self, self.initial_player, self.initial_boxes, 0)


@dataclass(frozen=True)
class State:
    level: Level = field(repr=False)
    player: Cell
    boxes: FrozenSet[Cell]
    steps_taken: int = 0

    def __post_init__(self):
        if not isinstance(self.boxes, frozenset):
            object.__setattr__(self, "boxes", frozenset(self.boxes))
        lvl = self.level
        if len(self.boxes) != len(lvl.targets):
            raise ContractError("box count differs from target count")
        if self.player in self.boxes:
            raise ContractError(f"player {self.player} stands on a box")
        if not lvl.is_floor(self.player) or any(not lvl.is_floor(b) for b in self.boxes):
            raise ContractError("entity on a wall or out of bounds")

    @property
    def key(self) -> Tuple[Cell, Tuple[Cell, ...]]:
        """Hashable identity of the configuration, ignoring the step counter."""
        return self.player, tuple(sorted(self.boxes))


@dataclass(frozen=True)
class StepOutcome:
    next_state: State
    reward: float
    solved: bool
    truncated: bool
    events: FrozenSet[Event]


def is_solved(state: State) -> bool:
    return state.boxes == state.level.targets


def compute_reward(events: Iterable[Event], per_step: bool = True,
                   config: RewardConfig = DEFAULT_REWARDS) -> float:
    """Sum of event rewards plus the per-step penalty."""
    total = config.per_step if per_step else 0.0
    for ev in events:
        if ev is Event.SOLVED:
            total += config.solved
        elif ev is Event.BOX_ON_TARGET:
            total += config.box_on_target
        elif ev is Event.BOX_OFF_TARGET:
            total += config.box_off_target
    return total


def step(state: State, action: Action, step_cap: int = STEP_CAP,
         rewards: RewardConfig = DEFAULT_REWARDS) -> StepOutcome:
    """Apply one action. Raises ContractError if the episode has already ended."""
    if is_solved(state) or state.steps_taken >= step_cap:
        raise ContractError("step() called on a terminated episode")
    level = state.level
    dr, dc = DELTAS[Action(action)]
    player, boxes = state.player, state.boxes
    events = set()
    if dr or dc:
        nxt = (player[0] + dr, player[1] + dc)
        if nxt in boxes:
            beyond = (nxt[0] + dr, nxt[1] + dc)
            if level.is_floor(beyond) and beyond not in boxes:
                boxes = (boxes - {nxt}) | {beyond}
                player = nxt
                was_on = nxt in level.targets
                now_on = beyond in level.targets
                if now_on and not was_on:
                    events.add(Event.BOX_ON_TARGET)
                elif was_on and not now_on:
                    events.add(Event.BOX_OFF_TARGET)
        elif level.is_floor(nxt):
            player = nxt
    next_state = State(level, player, boxes, state.steps_taken + 1)
    solved = boxes == level.targets
    if solved:
        events.add(Event.SOLVED)
    truncated = not solved and next_state.steps_taken >= step_cap
    events = frozenset(events)
    return StepOutcome(next_state, compute_reward(events, True, rewards), solved, truncated, events)


# --- observations -----------------------------------------------------------

SYMBOLIC_CHANNELS = ("wall", "floor", "target", "box", "box_on_target", "player", "player_on_target")

PIXEL_COLORS = {
    "wall": (0.35, 0.35, 0.35),
    "floor": (0.0, 0.0, 0.0),
    "target": (0.8, 0.2, 0.2),
    "box": (0.85, 0.65, 0.1),
    "box_on_target": (0.2, 0.8, 0.2),
    "player": (0.2, 0.4, 0.95),
    "player_on_target": (0.6, 0.3, 0.9),
}
PIXEL_BLOCK = 8


def encode(state: State, mode: str = "symbolic") -> np.ndarray:
    """Observation tensor of shape (channels, height, width).

    ``symbolic``: 7 one-hot channels ordered as SYMBOLIC_CHANNELS.
    ``pixel``: 3-channel flat-colour rendering, PIXEL_BLOCK pixels per cell.
    """
    level = state.level
    obs = level._base_symbolic.copy()
    targets = level.targets
    for r, c in state.boxes:
        obs[1:3, r, c] = 0.0
        obs[4 if (r, c) in targets else 3, r, c] = 1.0
    r, c = state.player
    obs[1:3, r, c] = 0.0
    obs[6 if (r, c) in targets else 5, r, c] = 1.0
    if mode == "symbolic":
        return obs
    if mode == "pixel":
        palette = np.array([PIXEL_COLORS[name] for name in SYMBOLIC_CHANNELS])
        rgb = np.einsum("khw,kc->chw", obs, palette)
        return np.repeat(np.repeat(rgb, PIXEL_BLOCK, axis=1), PIXEL_BLOCK, axis=2)
    raise ValueError(f"unknown observation mode {mode!r}")


def decode(obs: np.ndarray, level_id: str = "") -> State:
    """Inverse of the symbolic encoding; rebuilds a Level and the current State."""
    idx = np.argmax(obs, axis=0)
    walls, targets, boxes = set(), set(), set()
    player = None
    for (r, c), k in np.ndenumerate(idx):
        name = SYMBOLIC_CHANNELS[k]
        if name == "wall":
            walls.add((r, c))
        if name in ("target", "box_on_target", "player_on_target"):
            targets.add((r, c))
        if name in ("box", "box_on_target"):
            boxes.add((r, c))
        if name in ("player", "player_on_target"):
            player = (r, c)
    level = Level(obs.shape[1], obs.shape[2], walls, targets, player, boxes, id=level_id)
    return State(level, player, frozenset(boxes))


def pad_observation(obs: np.ndarray, height: int, width: int) -> np.ndarray:
    """Zero-pad an observation (bottom/right) to a fixed canvas."""
    c, h, w = obs.shape
    if h > height or w > width:
        raise ContractError(f"observation {h}x{w} larger than canvas {height}x{width}")
    if (h, w) == (height, width):
        return obs
    out = np.zeros((c, height, width), dtype=obs.dtype)
    out[:, :h, :w] = obs
    return out
