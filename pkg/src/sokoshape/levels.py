"""XSB level I/O and reverse-play level generation."""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .core import ContractError, Level

WALL, PLAYER, PLAYER_ON_TARGET, BOX, BOX_ON_TARGET, TARGET, FLOOR = "#@+$*. "
XSB_CHARS = frozenset(WALL + PLAYER + PLAYER_ON_TARGET + BOX + BOX_ON_TARGET + TARGET + FLOOR)


class LevelError(ContractError):
    """Level text or geometry is invalid."""


class ParseError(LevelError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class GenerationError(RuntimeError):
    pass


def canonical_xsb(text: str) -> str:
    """Strip trailing spaces per row and surrounding blank lines; LF endings."""
    rows = [row.rstrip(" \r") for row in text.replace("\r\n", "\n").split("\n")]
    while rows and not rows[0]:
        rows.pop(0)
    while rows and not rows[-1]:
        rows.pop()
    return "\n".join(rows)


def parse_xsb(text: str, level_id: Optional[str] = None) -> Level:
    rows = text.replace("\r\n", "\n").split("\n")
    while rows and not rows[-1].strip(" \r"):
        rows.pop()
    while rows and not rows[0].strip(" \r"):
        rows.pop(0)
    walls, targets, boxes, players = set(), set(), set(), []
    for r, row in enumerate(rows):
        row = row.rstrip("\r")
        for c, ch in enumerate(row):
            if ch not in XSB_CHARS:
                raise ParseError(f"unknown character {ch!r}", r + 1, c + 1)
            if ch == WALL:
                walls.add((r, c))
            if ch in (TARGET, PLAYER_ON_TARGET, BOX_ON_TARGET):
                targets.add((r, c))
            if ch in (BOX, BOX_ON_TARGET):
                boxes.add((r, c))
            if ch in (PLAYER, PLAYER_ON_TARGET):
                players.append((r, c))
    if len(players) != 1:
        raise LevelError(f"expected exactly one player, found {len(players)}")
    if len(boxes) != len(targets):
        raise LevelError(f"{len(boxes)} boxes but {len(targets)} targets")
    if level_id is None:
        level_id = "xsb-" + hashlib.sha1(canonical_xsb(text).encode()).hexdigest()[:12]
    width = max((len(row.rstrip(" \r")) for row in rows), default=0)
    return Level(len(rows), width, walls, targets, players[0], boxes, id=level_id)


def serialize_xsb(level: Level) -> str:
    rows = []
    for r in range(level.height):
        chars = []
        for c in range(level.width):
            cell = (r, c)
            on_target = cell in level.targets
            if cell in level.walls:
                chars.append(WALL)
            elif cell in level.initial_boxes:
                chars.append(BOX_ON_TARGET if on_target else BOX)
            elif cell == level.initial_player:
                chars.append(PLAYER_ON_TARGET if on_target else PLAYER)
            else:
                chars.append(TARGET if on_target else FLOOR)
        rows.append("".join(chars).rstrip(" "))
    return "\n".join(rows)


def parse_xsb_many(text: str, prefix: str = "") -> List[Level]:
    """Several levels separated by blank lines; lines starting with ';' are comments."""
    levels, block = [], []
    for line in text.replace("\r\n", "\n").split("\n") + [""]:
        if line.lstrip().startswith(";"):
            continue
        if line.strip():
            block.append(line)
        elif block:
            lid = f"{prefix}{len(levels)}" if prefix else None
            levels.append(parse_xsb("\n".join(block), lid))
            block = []
    return levels


@dataclass(frozen=True)
class LevelSet:
    levels: tuple
    n_boxes: int
    source: str = "file"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        for lvl in self.levels:
            if lvl.n_boxes != self.n_boxes:
                raise LevelError(f"level {lvl.id!r} has {lvl.n_boxes} boxes, set expects {self.n_boxes}")

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def save_level_set(level_set: LevelSet, directory: Union[str, os.PathLike],
                   header: str = "") -> Path:
    """Write one XSB file per level plus ``manifest.txt``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, level in enumerate(level_set):
        name = f"level_{i:03d}.xsb"
        (directory / name).write_text(serialize_xsb(level) + "\n", encoding="utf-8")
        names.append(name)
    lines = [f"# {header}"] if header else []
    lines += [f"# source = {level_set.source}", f"n_boxes = {level_set.n_boxes}", *names]
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_level_set(path: Union[str, os.PathLike]) -> LevelSet:
    """Load a manifest, a single XSB file, or a directory containing ``manifest.txt``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"no such level file or manifest: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".xsb":
        levels = parse_xsb_many(text, prefix=f"{path.stem}-")
        if not levels:
            raise LevelError(f"{path}: no levels found")
        return LevelSet(levels, levels[0].n_boxes, "file")
    n_boxes, levels = None, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("n_boxes"):
            n_boxes = int(line.split("=", 1)[1])
            continue
        file = (path.parent / line)
        found = parse_xsb_many(file.read_text(encoding="utf-8"), prefix=f"{file.stem}-")
        if len(found) == 1:
            found = [dataclasses.replace(found[0], id=file.stem)]
        levels.extend(found)
    if not levels:
        raise LevelError(f"{path}: manifest lists no levels")
    if n_boxes is None:
        n_boxes = levels[0].n_boxes
    return LevelSet(levels, n_boxes, "file")


# --- generation -------------------------------------------------------------

_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _carve_room(rng: np.random.Generator, height: int, width: int) -> set:
    """Random-walk carving inside a one-cell wall border."""
    floor = set()
    r = int(rng.integers(1, height - 1))
    c = int(rng.integers(1, width - 1))
    d = _DIRS[int(rng.integers(4))]
    n_steps = int(1.5 * (height - 2) * (width - 2))
    for _ in range(n_steps):
        floor.add((r, c))
        if rng.random() < 0.5:
            nr, nc = (r + d[1], c + d[0]) if rng.random() < 0.5 else (r - d[1], c - d[0])
            if 1 <= nr < height - 1 and 1 <= nc < width - 1:
                floor.add((nr, nc))
        if rng.random() < 0.35:
            d = _DIRS[int(rng.integers(4))]
        r = min(max(r + d[0], 1), height - 2)
        c = min(max(c + d[1], 1), width - 2)
    return floor


def _reverse_play(rng, floor, targets, player, max_pulls):
    """Random walk where moving away from an adjacent box may pull it along.

    Returns the most scrambled (player, boxes) configuration seen, or None.
    """
    boxes = list(sorted(targets))
    origin = list(boxes)
    best, best_score = None, 0
    pulls = 0
    for _ in range(10 * max_pulls + 50):
        dr, dc = _DIRS[int(rng.integers(4))]
        nxt = (player[0] + dr, player[1] + dc)
        if nxt not in floor or nxt in boxes:
            continue
        behind = (player[0] - dr, player[1] - dc)
        if pulls < max_pulls and behind in boxes and rng.random() < 0.8:
            boxes[boxes.index(behind)] = player
            pulls += 1
        player = nxt
        off = sum(b not in targets for b in boxes)
        moved = sum(abs(b[0] - o[0]) + abs(b[1] - o[1]) for b, o in zip(boxes, origin))
        score = off * off * moved
        if score > best_score:
            best, best_score = (player, frozenset(boxes)), score
    return best


def _region(floor, start, boxes):
    seen = {start}
    stack = [start]
    while stack:
        r, c = stack.pop()
        for dr, dc in _DIRS:
            nxt = (r + dr, c + dc)
            if nxt in floor and nxt not in boxes and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def generate(seed: int, n_boxes: int, height: int = 7, width: int = 7, max_pulls: int = 30,
             verify: bool = True, max_tries: int = 200) -> Level:
    """Generate a solvable level by playing Sokoban backwards from the solved position.

    ``height`` and ``width`` include the wall border.  The result depends only on the
    arguments.  With ``verify`` the planner confirms solvability.
    """
    if height < 5 or width < 5:
        raise ValueError("height and width must be >= 5")
    if n_boxes < 1:
        raise ValueError("n_boxes must be >= 1")
    if max_pulls < 1:
        raise ValueError("max_pulls must be >= 1")
    rng = np.random.default_rng([seed, n_boxes, height, width, max_pulls])
    for attempt in range(max_tries):
        floor = _carve_room(rng, height, width)
        if len(floor) < 2 * n_boxes + 3:
            continue
        cells = sorted(floor)
        picks = rng.choice(len(cells), size=n_boxes + 1, replace=False)
        targets = frozenset(cells[i] for i in picks[:n_boxes])
        player = cells[picks[n_boxes]]
        found = _reverse_play(rng, floor, targets, player, max_pulls)
        if found is None:
            continue
        start, boxes = found
        # any cell of the player's region is equally solvable; sampling one adds walking
        region = sorted(_region(floor, start, boxes))
        start = region[int(rng.integers(len(region)))]
        walls = {(r, c) for r in range(height) for c in range(width)} - floor
        level = Level(height, width, walls, targets, start, boxes,
                      id=f"gen-s{seed}-b{n_boxes}-{height}x{width}-p{max_pulls}")
        if verify:
            from .planner import MIN_MATCHING, Solved, solve_astar
            result = solve_astar(level.initial_state(), MIN_MATCHING, node_budget=500_000)
            if not isinstance(result.status, Solved):
                raise GenerationError(f"reverse-play level not solvable: {level.id}")
        return level
    raise GenerationError(f"no usable room after {max_tries} attempts (seed={seed})")


def generate_set(seed: int, count: int, n_boxes: int, height: int = 7, width: int = 7,
                 max_pulls: int = 30) -> LevelSet:
    levels = [generate(seed * 100_003 + i, n_boxes, height, width, max_pulls) for i in range(count)]
    return LevelSet(levels, n_boxes, f"generated(seed={seed})")


