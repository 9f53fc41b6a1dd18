"""Deterministic egocentric grid scenarios.

G1  square room, health kits, health decays every step
G2  maze, health kits and poison vials, health decays every step
G3  square room, monsters, kits and ammo; measurements (ammo, health, frags)
G4  maze version of G3

The agent sees a (2r+1)x(2r+1) window rotated so that its facing direction
points up. All randomness during an episode comes from the generator seeded
at reset, so (seed, action sequence) determines the whole trajectory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..exceptions import InvalidArgument, InvalidState
from .layouts import Cell, Layout, load_map, maze_layout, room_layout
from .palettes import STRUCTURE_TYPES, Palette, make_appearance_split

logger = logging.getLogger(__name__)

SCENARIOS = ("G1", "G2", "G3", "G4")
BATTLE_SCENARIOS = ("G3", "G4")

# Facing: 0 north, 1 east, 2 south, 3 west.
DIRECTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))

STRUCTURE_CHANNELS = ("wall", "kit", "poison", "monster", "projectile", "ammo")
WALL, KIT, POISON, MONSTER, PROJECTILE, AMMO = range(len(STRUCTURE_CHANNELS))
_TYPE = {name: index for index, name in enumerate(STRUCTURE_TYPES)}

NAVIGATION_SUB_ACTIONS = ("forward", "turn_left", "turn_right")
BATTLE_SUB_ACTIONS = ("forward", "backward", "turn_left", "turn_right", "shoot")
KNOWN_SUB_ACTIONS = frozenset(BATTLE_SUB_ACTIONS + ("strafe_left", "strafe_right"))

PALETTE_SETS = ("fixed", "train", "test", "all")

_SCENARIO_DEFAULTS = {
    "G1": dict(size=32, maze=False, kit_density=0.02, poison_density=0.0,
               monster_density=0.0, ammo_density=0.0, health_decay=1),
    "G2": dict(size=48, maze=True, kit_density=0.015, poison_density=0.015,
               monster_density=0.0, ammo_density=0.0, health_decay=1),
    "G3": dict(size=32, maze=False, kit_density=0.006, poison_density=0.0,
               monster_density=0.008, ammo_density=0.006, health_decay=0),
    "G4": dict(size=48, maze=True, kit_density=0.005, poison_density=0.0,
               monster_density=0.006, ammo_density=0.005, health_decay=0),
}


@dataclass(frozen=True)
class GridWorldConfig:
    scenario: str = "G1"
    # None picks the scenario default.
    height: int | None = None
    width: int | None = None
    episode_cap: int = 256
    kit_density: float | None = None
    poison_density: float | None = None
    monster_density: float | None = None
    ammo_density: float | None = None
    health_decay: int | None = None
    kit_health: int = 25
    poison_damage: int = 30
    monster_damage: int = 8
    monster_health: int = 1
    monster_move_period: int = 2
    projectile_probability: float = 0.1
    shoot_range: int = 6
    ammo_start: int = 15
    ammo_pickup: int = 10
    view_radius: int = 7
    frame_skip: int = 1
    sub_actions: tuple[str, ...] | None = None
    appearance_channels: int = 4
    palette_count: int = 100
    palette_train_fraction: float = 0.9
    palette_seed: int = 0
    palette_set: str = "fixed"
    layout_seed: int = 0
    map_file: str | None = None

    @property
    def battle(self) -> bool:
        return self.scenario in BATTLE_SCENARIOS

    def resolved(self) -> GridWorldConfig:
        if self.scenario not in SCENARIOS:
            raise InvalidArgument(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        defaults = _SCENARIO_DEFAULTS[self.scenario]
        updates = {
            name: defaults[name]
            for name in ("kit_density", "poison_density", "monster_density", "ammo_density", "health_decay")
            if getattr(self, name) is None
        }
        if self.height is None:
            updates["height"] = defaults["size"]
        if self.width is None:
            updates["width"] = defaults["size"]
        if self.sub_actions is None:
            updates["sub_actions"] = BATTLE_SUB_ACTIONS if self.battle else NAVIGATION_SUB_ACTIONS
        config = replace(self, **updates)
        config.validate()
        return config

    def validate(self) -> None:
        if self.episode_cap < 1:
            raise InvalidArgument("episode_cap must be at least 1")
        if self.view_radius < 0:
            raise InvalidArgument("view_radius must be non-negative")
        if self.frame_skip < 1:
            raise InvalidArgument("frame_skip must be at least 1")
        if self.monster_move_period < 1:
            raise InvalidArgument("monster_move_period must be at least 1")
        if self.palette_set not in PALETTE_SETS:
            raise InvalidArgument(f"palette_set must be one of {', '.join(PALETTE_SETS)}")
        unknown = set(self.sub_actions or ()) - KNOWN_SUB_ACTIONS
        if unknown:
            raise InvalidArgument(f"unknown sub-actions: {', '.join(sorted(unknown))}")
        if self.sub_actions is not None and len(set(self.sub_actions)) != len(self.sub_actions):
            raise InvalidArgument("sub-actions must be unique")


def scenario_config(name: str, **overrides) -> GridWorldConfig:
    """Config for ``G1``..``G4``; a ``-tx`` suffix trains on randomized palettes."""
    scenario, _, suffix = name.partition("-")
    if suffix not in ("", "tx"):
        raise InvalidArgument(f"unknown scenario variant {name!r}")
    base = GridWorldConfig(scenario=scenario, palette_set="train" if suffix == "tx" else "fixed")
    known = {f.name for f in fields(GridWorldConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise InvalidArgument(f"unknown environment settings: {', '.join(sorted(unknown))}")
    return replace(base, **overrides)


@dataclass(frozen=True)
class ActionSet:
    sub_actions: tuple[str, ...]

    @property
    def n_actions(self) -> int:
        return 2 ** len(self.sub_actions)

    def decode(self, index: int) -> frozenset[str]:
        if not 0 <= index < self.n_actions:
            raise InvalidArgument(f"action {index} outside [0, {self.n_actions})")
        return frozenset(name for bit, name in enumerate(self.sub_actions) if index >> bit & 1)

    def combinations(self) -> list[frozenset[str]]:
        return [self.decode(index) for index in range(self.n_actions)]


@dataclass
class Monster:
    row: int
    col: int
    health: int


@dataclass
class Projectile:
    row: int
    col: int
    direction: int


@dataclass(eq=False)
class EnvState:
    row: int
    col: int
    facing: int
    health: int
    ammo: int
    frags: int
    palette: Palette
    rng: np.random.Generator
    kits: set[Cell] = field(default_factory=set)
    poison: set[Cell] = field(default_factory=set)
    ammo_packs: set[Cell] = field(default_factory=set)
    monsters: list[Monster] = field(default_factory=list)
    projectiles: list[Projectile] = field(default_factory=list)
    step: int = 0
    frame: int = 0
    terminal: bool = False

    @property
    def position(self) -> Cell:
        return self.row, self.col


@dataclass(frozen=True, eq=False)
class Observation:
    sensory: np.ndarray
    measurements: np.ndarray


class GridWorld:
    def __init__(self, config: GridWorldConfig) -> None:
        self.config = config = config.resolved()
        if config.map_file:
            self.layout = load_map(config.map_file)
        elif _SCENARIO_DEFAULTS[config.scenario]["maze"]:
            self.layout = maze_layout(config.height, config.width, np.random.default_rng(config.layout_seed))
        else:
            self.layout = room_layout(config.height, config.width)

        self.action_set = ActionSet(config.sub_actions)
        self.measurement_names = ("ammo", "health", "frags") if config.battle else ("health",)
        radius = config.view_radius
        size = 2 * radius + 1
        self.observation_shape = (size, size, len(STRUCTURE_CHANNELS) + config.appearance_channels)
        self._padded_walls = np.pad(self.layout.walls, radius, constant_values=True)
        self._decoded = self.action_set.combinations()

        train, test = make_appearance_split(
            config.palette_count,
            config.palette_train_fraction,
            np.random.default_rng(config.palette_seed),
            n_codes=config.appearance_channels,
        )
        self.palettes = {
            "fixed": train[:1],
            "train": train,
            "test": test,
            "all": sorted(train + test, key=lambda p: p.palette_id),
        }[config.palette_set]
        # One-hot appearance rows per structural type, keyed by palette id.
        self._appearance = {
            palette.palette_id: np.eye(config.appearance_channels, dtype=np.uint8)[np.asarray(palette.codes)]
            for palette in self.palettes
        }

        floor_cells = len(self.layout.floor)
        self._targets = {
            "kit": _count(config.kit_density, floor_cells),
            "poison": _count(config.poison_density, floor_cells),
            "ammo": _count(config.ammo_density, floor_cells),
            "monster": _count(config.monster_density, floor_cells),
        }

    @property
    def n_actions(self) -> int:
        return self.action_set.n_actions

    @property
    def n_measurements(self) -> int:
        return len(self.measurement_names)

    def reset(self, rng: np.random.Generator) -> tuple[EnvState, Observation]:
        config = self.config
        agent_region = self.layout.region("agent")
        row, col = agent_region[int(rng.integers(len(agent_region)))]
        state = EnvState(
            row=row,
            col=col,
            facing=int(rng.integers(4)),
            health=100,
            ammo=config.ammo_start if config.battle else 0,
            frags=0,
            palette=self.palettes[int(rng.integers(len(self.palettes)))],
            rng=np.random.default_rng(int(rng.integers(2 ** 63))),
        )
        self._respawn(state)
        return state, self.observe(state)

    def step(self, state: EnvState, action: int) -> tuple[EnvState, Observation, bool]:
        """Advance ``state`` in place by one agent step (``frame_skip`` frames)."""
        if state.terminal:
            raise InvalidState("cannot step a terminal state; reset the environment")
        action = int(action)
        if not 0 <= action < len(self._decoded):
            raise InvalidArgument(f"action {action} outside [0, {len(self._decoded)})")
        sub_actions = self._decoded[action]
        for _ in range(self.config.frame_skip):
            self._advance(state, sub_actions)
            if state.health <= 0:
                break
        state.step += 1
        state.terminal = state.health <= 0 or state.step >= self.config.episode_cap
        return state, self.observe(state), state.terminal

    def measurements(self, state: EnvState) -> np.ndarray:
        if self.config.battle:
            return np.asarray((state.ammo, state.health, state.frags), dtype=np.float32)
        return np.asarray((state.health,), dtype=np.float32)

    def observe(self, state: EnvState) -> Observation:
        radius = self.config.view_radius
        size = 2 * radius + 1
        walls = self._padded_walls[state.row:state.row + size, state.col:state.col + size]
        sensory = np.zeros(self.observation_shape, dtype=np.uint8)
        sensory[..., WALL] = walls
        types = np.where(walls, _TYPE["wall"], _TYPE["floor"])

        def place(cells, channel: int, type_name: str | None) -> None:
            for cell_row, cell_col in cells:
                r = cell_row - state.row + radius
                c = cell_col - state.col + radius
                if 0 <= r < size and 0 <= c < size:
                    sensory[r, c, channel] = 1
                    if type_name is not None:
                        types[r, c] = _TYPE[type_name]

        place(state.kits, KIT, "kit")
        place(state.poison, POISON, "poison")
        place(state.ammo_packs, AMMO, "ammo")
        place(((m.row, m.col) for m in state.monsters), MONSTER, "monster")
        place(((p.row, p.col) for p in state.projectiles), PROJECTILE, None)

        sensory[..., len(STRUCTURE_CHANNELS):] = self._appearance[state.palette.palette_id][types]
        sensory = np.ascontiguousarray(np.rot90(sensory, k=state.facing, axes=(0, 1)))
        return Observation(sensory, self.measurements(state))

    # dynamics

    def _advance(self, state: EnvState, sub_actions: frozenset[str]) -> None:
        config = self.config
        state.frame += 1
        state.health -= config.health_decay

        turn = ("turn_right" in sub_actions) - ("turn_left" in sub_actions)
        state.facing = (state.facing + turn) % 4
        move = ("forward" in sub_actions) - ("backward" in sub_actions)
        if move:
            self._move(state, state.facing if move > 0 else (state.facing + 2) % 4)
        strafe = ("strafe_right" in sub_actions) - ("strafe_left" in sub_actions)
        if strafe:
            self._move(state, (state.facing + strafe) % 4)
        if "shoot" in sub_actions:
            self._shoot(state)

        self._move_projectiles(state)
        if state.frame % config.monster_move_period == 0:
            self._monsters_act(state)
        self._respawn(state)

    def _monster_at(self, state: EnvState, cell: Cell) -> Monster | None:
        for monster in state.monsters:
            if (monster.row, monster.col) == cell:
                return monster
        return None

    def _move(self, state: EnvState, direction: int) -> None:
        dr, dc = DIRECTIONS[direction]
        target = (state.row + dr, state.col + dc)
        if self.layout.is_wall(*target) or self._monster_at(state, target) is not None:
            return
        state.row, state.col = target
        config = self.config
        if target in state.kits:
            state.kits.discard(target)
            state.health = min(100, state.health + config.kit_health)
        if target in state.poison:
            state.poison.discard(target)
            state.health -= config.poison_damage
        if target in state.ammo_packs:
            state.ammo_packs.discard(target)
            state.ammo += config.ammo_pickup

    def _shoot(self, state: EnvState) -> None:
        if state.ammo <= 0:
            return
        state.ammo -= 1
        dr, dc = DIRECTIONS[state.facing]
        for distance in range(1, self.config.shoot_range + 1):
            cell = (state.row + dr * distance, state.col + dc * distance)
            if self.layout.is_wall(*cell):
                return
            monster = self._monster_at(state, cell)
            if monster is not None:
                monster.health -= 1
                if monster.health <= 0:
                    state.monsters.remove(monster)
                    state.frags += 1
                return

    def _move_projectiles(self, state: EnvState) -> None:
        remaining = []
        for projectile in state.projectiles:
            if (projectile.row, projectile.col) == state.position:
                state.health -= self.config.monster_damage
                continue
            dr, dc = DIRECTIONS[projectile.direction]
            projectile.row += dr
            projectile.col += dc
            if (projectile.row, projectile.col) == state.position:
                state.health -= self.config.monster_damage
            elif not self.layout.is_wall(projectile.row, projectile.col):
                remaining.append(projectile)
        state.projectiles = remaining

    def _line_of_sight(self, start: Cell, end: Cell) -> int | None:
        """Direction from start to end when both share a row or column with no wall between."""
        (r0, c0), (r1, c1) = start, end
        if r0 != r1 and c0 != c1:
            return None
        direction = DIRECTIONS.index((_sign(r1 - r0), _sign(c1 - c0)))
        dr, dc = DIRECTIONS[direction]
        row, col = r0 + dr, c0 + dc
        while (row, col) != end:
            if self.layout.is_wall(row, col):
                return None
            row, col = row + dr, col + dc
        return direction

    def _monsters_act(self, state: EnvState) -> None:
        config = self.config
        for monster in state.monsters:
            dr = state.row - monster.row
            dc = state.col - monster.col
            distance = abs(dr) + abs(dc)
            if distance == 1:
                state.health -= config.monster_damage
                continue
            if distance <= config.shoot_range:
                direction = self._line_of_sight((monster.row, monster.col), state.position)
                if direction is not None and state.rng.random() < config.projectile_probability:
                    state.projectiles.append(Projectile(monster.row, monster.col, direction))
                    continue
            steps = [(_sign(dr), 0), (0, _sign(dc))]
            if abs(dc) > abs(dr):
                steps.reverse()
            for step_row, step_col in steps:
                if step_row == step_col == 0:
                    continue
                cell = (monster.row + step_row, monster.col + step_col)
                if (
                    cell != state.position
                    and not self.layout.is_wall(*cell)
                    and self._monster_at(state, cell) is None
                ):
                    monster.row, monster.col = cell
                    break

    def _respawn(self, state: EnvState) -> None:
        targets = self._targets
        if (
            len(state.kits) >= targets["kit"]
            and len(state.poison) >= targets["poison"]
            and len(state.ammo_packs) >= targets["ammo"]
            and len(state.monsters) >= targets["monster"]
        ):
            return
        occupied = {state.position} | state.kits | state.poison | state.ammo_packs
        occupied.update((m.row, m.col) for m in state.monsters)
        for kind, pool in (("kit", state.kits), ("poison", state.poison), ("ammo", state.ammo_packs)):
            while len(pool) < self._targets[kind]:
                cell = self._free_cell(state, kind, occupied)
                if cell is None:
                    break
                pool.add(cell)
                occupied.add(cell)
        while len(state.monsters) < self._targets["monster"]:
            cell = self._free_cell(state, "monster", occupied, keep_away=2)
            if cell is None:
                break
            state.monsters.append(Monster(cell[0], cell[1], self.config.monster_health))
            occupied.add(cell)

    def _free_cell(self, state: EnvState, kind: str, occupied: set[Cell], *, keep_away: int = 0) -> Cell | None:
        candidates = [
            cell
            for cell in self.layout.region(kind)
            if cell not in occupied
            and max(abs(cell[0] - state.row), abs(cell[1] - state.col)) > keep_away
        ]
        if not candidates:
            return None
        return candidates[int(state.rng.integers(len(candidates)))]


def _sign(value: int) -> int:
    return (value > 0) - (value < 0)


def _count(density: float, floor_cells: int) -> int:
    if density <= 0:
        return 0
    return max(1, int(round(density * floor_cells)))


def reset(env: GridWorld, rng: np.random.Generator) -> tuple[EnvState, Observation]:
    return env.reset(rng)


def step(env: GridWorld, state: EnvState, action: int) -> tuple[EnvState, Observation, bool]:
    return env.step(state, action)
