from .gridworld import (
    BATTLE_SUB_ACTIONS,
    NAVIGATION_SUB_ACTIONS,
    SCENARIOS,
    STRUCTURE_CHANNELS,
    ActionSet,
    EnvState,
    GridWorld,
    GridWorldConfig,
    Monster,
    Observation,
    Projectile,
    reset,
    scenario_config,
    step,
)
from .layouts import Layout, format_map, load_map, maze_layout, parse_map, room_layout
from .palettes import Palette, make_appearance_split

__all__ = [
    "BATTLE_SUB_ACTIONS",
    "NAVIGATION_SUB_ACTIONS",
    "SCENARIOS",
    "STRUCTURE_CHANNELS",
    "ActionSet",
    "EnvState",
    "GridWorld",
    "GridWorldConfig",
    "Layout",
    "Monster",
    "Observation",
    "Palette",
    "Projectile",
    "format_map",
    "load_map",
    "make_appearance_split",
    "maze_layout",
    "parse_map",
    "reset",
    "room_layout",
    "scenario_config",
    "step",
]
