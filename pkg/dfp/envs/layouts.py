"""Static grid layouts: plain-text maps, square rooms and procedural mazes.

Map format, one character per cell:

    #  wall
    .  floor
    K  health kit spawn cell
    P  poison spawn cell
    M  monster spawn cell
    A  ammo spawn cell
    S  agent spawn region

Spawn cells are floor. When a map has no cells of a given spawn kind,
that kind spawns anywhere on the floor. Cells outside the map are walls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ..exceptions import InvalidArgument

Cell = tuple[int, int]

SPAWN_KINDS = {"S": "agent", "K": "kit", "P": "poison", "M": "monster", "A": "ammo"}
_KIND_CODES = {kind: code for code, kind in SPAWN_KINDS.items()}


@dataclass(frozen=True, eq=False)
class Layout:
    walls: np.ndarray
    spawns: dict[str, tuple[Cell, ...]] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    @cached_property
    def floor(self) -> tuple[Cell, ...]:
        rows, cols = np.nonzero(~self.walls)
        return tuple(zip(rows.tolist(), cols.tolist()))

    @cached_property
    def wall_cells(self) -> frozenset[Cell]:
        rows, cols = np.nonzero(self.walls)
        return frozenset(zip(rows.tolist(), cols.tolist()))

    def region(self, kind: str) -> tuple[Cell, ...]:
        return self.spawns.get(kind) or self.floor

    def is_wall(self, row: int, col: int) -> bool:
        height, width = self.walls.shape
        return not (0 <= row < height and 0 <= col < width) or (row, col) in self.wall_cells


def parse_map(text: str) -> Layout:
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[0]:
        lines.pop(0)
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise InvalidArgument("map is empty")
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise InvalidArgument("every map row must have the same width")

    walls = np.zeros((len(lines), width), dtype=bool)
    spawns: dict[str, list[Cell]] = {}
    for row, line in enumerate(lines):
        for col, char in enumerate(line):
            if char == "#":
                walls[row, col] = True
            elif char in SPAWN_KINDS:
                spawns.setdefault(SPAWN_KINDS[char], []).append((row, col))
            elif char != ".":
                raise InvalidArgument(f"unknown map character {char!r} at row {row}, column {col}")
    if walls.all():
        raise InvalidArgument("map has no floor cells")
    return Layout(walls, {kind: tuple(cells) for kind, cells in spawns.items()})


def load_map(path: str | Path) -> Layout:
    return parse_map(Path(path).read_text(encoding="utf-8"))


def format_map(layout: Layout) -> str:
    chars = np.where(layout.walls, "#", ".").astype("<U1")
    for kind, cells in layout.spawns.items():
        for row, col in cells:
            chars[row, col] = _KIND_CODES[kind]
    return "\n".join("".join(row) for row in chars) + "\n"


def room_layout(height: int, width: int) -> Layout:
    if height < 3 or width < 3:
        raise InvalidArgument(f"a room needs at least 3x3 cells, got {height}x{width}")
    walls = np.zeros((height, width), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    return Layout(walls)


def maze_layout(height: int, width: int, rng: np.random.Generator, *, loop_fraction: float = 0.15) -> Layout:
    """Corridors two cells wide carved by a randomized depth-first search.

    A share of the remaining interior walls is knocked out afterwards so the
    maze has loops.
    """
    rows, cols = (height - 1) // 3, (width - 1) // 3
    if rows < 2 or cols < 2:
        raise InvalidArgument(f"a maze needs at least 7x7 cells, got {height}x{width}")
    walls = np.ones((height, width), dtype=bool)
    for i in range(rows):
        for j in range(cols):
            walls[1 + 3 * i:3 + 3 * i, 1 + 3 * j:3 + 3 * j] = False

    def open_between(a: Cell, b: Cell) -> None:
        (i, j), (k, _) = sorted((a, b))
        if i == k:
            walls[1 + 3 * i:3 + 3 * i, 3 + 3 * j] = False
        else:
            walls[3 + 3 * i, 1 + 3 * j:3 + 3 * j] = False

    visited = np.zeros((rows, cols), dtype=bool)
    stack: list[Cell] = [(int(rng.integers(rows)), int(rng.integers(cols)))]
    visited[stack[0]] = True
    while stack:
        i, j = stack[-1]
        neighbours = [
            (i + di, j + dj)
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if 0 <= i + di < rows and 0 <= j + dj < cols and not visited[i + di, j + dj]
        ]
        if not neighbours:
            stack.pop()
            continue
        nxt = neighbours[int(rng.integers(len(neighbours)))]
        open_between((i, j), nxt)
        visited[nxt] = True
        stack.append(nxt)

    for i in range(rows):
        for j in range(cols):
            for nxt in ((i + 1, j), (i, j + 1)):
                if nxt[0] < rows and nxt[1] < cols and rng.random() < loop_fraction:
                    open_between((i, j), nxt)
    return Layout(walls)
