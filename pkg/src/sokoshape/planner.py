"""A* planning over Sokoban states, the distance function, and deadlock checks.

The search runs on push-level nodes ``(player cell, boxes)``: one expansion walks
the player (breadth-first) to every reachable push position and applies the
push, costing ``walk length + 1`` agent moves.  Plans are returned as full
agent-move sequences.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ACTION_LETTERS, DELTAS, MOVE_ACTIONS, Action, Cell, Level, State

log = logging.getLogger(__name__)

ALL_PAIRS = "all_pairs"
NEAREST_TARGET = "nearest_target"
MIN_MATCHING = "min_matching"
HEURISTIC_MODES = (ALL_PAIRS, NEAREST_TARGET, MIN_MATCHING)

TRAINING_NODE_BUDGET = 200_000

UNSOLVABLE = None
"""Returned by :func:`distance` for states from which the goal is unreachable."""


@dataclass(frozen=True)
class Solved:
    plan: Tuple[Action, ...]

    @property
    def length(self) -> int:
        return len(self.plan)


@dataclass(frozen=True)
class Unsolvable:
    pass


@dataclass(frozen=True)
class Budget:
    exhausted_nodes: int


@dataclass(frozen=True)
class PlanResult:
    status: Union[Solved, Unsolvable, Budget]
    nodes_expanded: int

    @property
    def solved(self) -> bool:
        return isinstance(self.status, Solved)

    @property
    def plan(self) -> Optional[Tuple[Action, ...]]:
        return self.status.plan if self.solved else None

    @property
    def length(self) -> Optional[int]:
        return self.status.length if self.solved else None


def plan_to_string(plan) -> str:
    return "".join(ACTION_LETTERS[Action(a)] for a in plan)


# --- heuristics -------------------------------------------------------------

def _manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _unmatched(boxes, targets):
    return [b for b in boxes if b not in targets], [t for t in targets if t not in boxes]


def _heuristic(boxes, targets, mode: str) -> int:
    free_boxes, free_targets = _unmatched(boxes, targets)
    if not free_boxes:
        return 0
    if mode == ALL_PAIRS:
        return sum(_manhattan(b, t) for b in free_boxes for t in free_targets)
    if mode == NEAREST_TARGET:
        return sum(min(_manhattan(b, t) for t in free_targets) for b in free_boxes)
    if mode == MIN_MATCHING:
        if len(free_boxes) == 1:
            return _manhattan(free_boxes[0], free_targets[0])
        cost = np.array([[_manhattan(b, t) for t in free_targets] for b in free_boxes])
        rows, cols = linear_sum_assignment(cost)
        return int(cost[rows, cols].sum())
    raise ValueError(f"unknown heuristic mode {mode!r}")


def heuristic(state: State, mode: str = ALL_PAIRS) -> int:
    """Manhattan estimate over boxes not on targets and targets without boxes.

    ``all_pairs`` sums every (box, target) pair; ``nearest_target`` sums each box's
    nearest free target; ``min_matching`` is the optimal one-to-one assignment.
    Only the last two are admissible.
    """
    return _heuristic(state.boxes, state.level.targets, mode)


# --- static deadlocks -------------------------------------------------------

@lru_cache(maxsize=4096)
def dead_cells(level: Level) -> FrozenSet[Cell]:
    """Floor cells from which a lone box can never reach any target.

    Computed by pulling a box backwards from every target while ignoring other
    boxes, so membership is a sound (never false-positive) deadlock test.
    """
    floor = level.floor_cells
    live = set(level.targets)
    queue = deque(level.targets)
    while queue:
        r, c = queue.popleft()
        for a in MOVE_ACTIONS:
            dr, dc = DELTAS[a]
            one, two = (r + dr, c + dc), (r + 2 * dr, c + 2 * dc)
            if one in floor and two in floor and one not in live:
                live.add(one)
                queue.append(one)
    return frozenset(floor - live)


def is_deadlocked_static(state: State) -> bool:
    """True if some box off target sits on a dead cell; true implies unsolvable."""
    dead = dead_cells(state.level)
    return any(b in dead for b in state.boxes)


# --- search -----------------------------------------------------------------

def _walk_distances(level: Level, start: Cell, boxes) -> Dict[Cell, int]:
    dist = {start: 0}
    queue = deque([start])
    floor = level.floor_cells
    while queue:
        cell = queue.popleft()
        d = dist[cell] + 1
        for a in MOVE_ACTIONS:
            dr, dc = DELTAS[a]
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt in floor and nxt not in boxes and nxt not in dist:
                dist[nxt] = d
                queue.append(nxt)
    return dist


def _walk_path(level: Level, start: Cell, goal: Cell, boxes) -> List[Action]:
    parent = {start: None}
    queue = deque([start])
    floor = level.floor_cells
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        for a in MOVE_ACTIONS:
            dr, dc = DELTAS[a]
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt in floor and nxt not in boxes and nxt not in parent:
                parent[nxt] = (cell, a)
                queue.append(nxt)
    path = []
    cell = goal
    while parent[cell] is not None:
        cell, a = parent[cell]
        path.append(a)
    return path[::-1]


def reachable_region(level: Level, player: Cell, boxes) -> FrozenSet[Cell]:
    return frozenset(_walk_distances(level, player, boxes))


def canonical_key(state: State) -> Tuple[Cell, Tuple[Cell, ...]]:
    """Player normalised to the smallest cell of its reachable region, sorted boxes."""
    region = _walk_distances(state.level, state.player, state.boxes)
    return min(region), tuple(sorted(state.boxes))


def _pushes(level: Level, player: Cell, boxes: FrozenSet[Cell], dead: FrozenSet[Cell]):
    """Yield (cost, push_from, action, new_boxes) for every legal push."""
    dist = _walk_distances(level, player, boxes)
    floor = level.floor_cells
    for box in sorted(boxes):
        for a in MOVE_ACTIONS:
            dr, dc = DELTAS[a]
            src = (box[0] - dr, box[1] - dc)
            if src not in dist:
                continue
            dest = (box[0] + dr, box[1] + dc)
            if dest not in floor or dest in boxes or dest in dead:
                continue
            yield dist[src] + 1, src, a, (boxes - {box}) | {dest}


def solve_astar(state: State, heuristic_mode: str = ALL_PAIRS,
                node_budget: Optional[int] = TRAINING_NODE_BUDGET) -> PlanResult:
    """Best-first search on f = g + h where g counts agent moves.

    Nodes are re-opened when a cheaper path appears, so the plan is optimal
    whenever the heuristic is admissible.  ``node_budget=None`` searches until
    the reachable space is exhausted.
    """
    level = state.level
    targets = level.targets
    dead = dead_cells(level)
    root = (state.player, state.boxes)
    if state.boxes == targets:
        return PlanResult(Solved(()), 0)
    if any(b in dead for b in state.boxes):
        return PlanResult(Unsolvable(), 0)

    best_g = {root: 0}
    parent = {root: None}
    counter = itertools.count()
    heap = [(_heuristic(state.boxes, targets, heuristic_mode), 0, next(counter), root)]
    expanded = 0
    while heap:
        f, neg_g, _, node = heapq.heappop(heap)
        g = -neg_g
        if g > best_g[node]:
            continue
        player, boxes = node
        if boxes == targets:
            return PlanResult(Solved(_reconstruct(level, parent, node)), expanded)
        if node_budget is not None and expanded >= node_budget:
            return PlanResult(Budget(expanded), expanded)
        expanded += 1
        for cost, src, a, new_boxes in _pushes(level, player, boxes, dead):
            dr, dc = DELTAS[a]
            child = ((src[0] + dr, src[1] + dc), new_boxes)
            ng = g + cost
            if ng < best_g.get(child, ng + 1):
                best_g[child] = ng
                parent[child] = (node, src, a)
                h = _heuristic(new_boxes, targets, heuristic_mode)
                heapq.heappush(heap, (ng + h, -ng, next(counter), child))
    return PlanResult(Unsolvable(), expanded)


def _reconstruct(level, parent, node) -> Tuple[Action, ...]:
    segments = []
    while parent[node] is not None:
        prev, src, a = parent[node]
        segments.append(_walk_path(level, prev[0], src, prev[1]) + [a])
        node = prev
    return tuple(a for seg in reversed(segments) for a in seg)


# --- distance function ------------------------------------------------------

class DistanceCache:
    """Memoised A* distances shared by all environments of a level set.

    Distances are stored per exact (player, boxes) configuration.  Unsolvable
    results are also stored under the region-normalised key, since solvability
    does not depend on where the player stands inside its reachable region.
    Reads are lock-free; inserts take a lock.
    """

    def __init__(self, heuristic_mode: str = ALL_PAIRS,
                 node_budget: Optional[int] = TRAINING_NODE_BUDGET):
        if heuristic_mode not in HEURISTIC_MODES:
            raise ValueError(f"unknown heuristic mode {heuristic_mode!r}")
        self.heuristic_mode = heuristic_mode
        self.node_budget = node_budget
        self._exact: Dict[tuple, Optional[int]] = {}
        self._dead_regions: set = set()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.budget_events = 0

    def __len__(self):
        return len(self._exact)

    def lookup(self, state: State):
        """Return (found, value)."""
        key = (state.level, state.player, state.boxes)
        if key in self._exact:
            return True, self._exact[key]
        return False, None

    def distance(self, state: State) -> Optional[int]:
        key = (state.level, state.player, state.boxes)
        try:
            value = self._exact[key]
            self.hits += 1
            return value
        except KeyError:
            pass
        self.misses += 1
        if is_deadlocked_static(state):
            value = UNSOLVABLE
        else:
            region_key = (state.level, canonical_key(state))
            if region_key in self._dead_regions:
                value = UNSOLVABLE
            else:
                result = solve_astar(state, self.heuristic_mode, self.node_budget)
                if isinstance(result.status, Budget):
                    self.budget_events += 1
                    log.warning("A* budget of %d nodes exhausted at %s; treating as unsolvable",
                                result.status.exhausted_nodes, state.key)
                    value = UNSOLVABLE
                elif isinstance(result.status, Unsolvable):
                    value = UNSOLVABLE
                    with self._lock:
                        self._dead_regions.add(region_key)
                else:
                    value = result.length
        with self._lock:
            self._exact[key] = value
        return value


def distance(state: State, cache: Optional[DistanceCache] = None) -> Optional[int]:
    """Agent-move length of the A* plan from ``state``, or UNSOLVABLE (None)."""
    if cache is None:
        cache = DistanceCache()
    return cache.distance(state)
