"""PNG rendering of observations and whole maps with Pillow."""
from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .agent import build_goal_vector, select_action
from .envs.gridworld import DIRECTIONS, STRUCTURE_CHANNELS

CELL_SIZE = 12

FLOOR_COLOUR = (236, 232, 220)
AGENT_COLOUR = (40, 90, 200)
# Later channels are drawn over earlier ones.
CHANNEL_COLOURS = {
    "wall": (70, 70, 70),
    "kit": (60, 170, 80),
    "poison": (150, 60, 170),
    "ammo": (210, 170, 40),
    "monster": (200, 50, 50),
    "projectile": (250, 120, 20),
}


def _upscale(pixels: np.ndarray, cell_size: int) -> Image.Image:
    enlarged = np.repeat(np.repeat(pixels, cell_size, axis=0), cell_size, axis=1)
    return Image.fromarray(enlarged.astype(np.uint8), mode="RGB")


def render_sensory(sensory: np.ndarray, *, cell_size: int = CELL_SIZE) -> Image.Image:
    """Colour the structural channels of an egocentric window; the agent sits in the centre facing up."""
    sensory = np.asarray(sensory)
    height, width = sensory.shape[:2]
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[...] = FLOOR_COLOUR
    for name, colour in CHANNEL_COLOURS.items():
        pixels[sensory[..., STRUCTURE_CHANNELS.index(name)] > 0] = colour
    image = _upscale(pixels, cell_size)

    draw = ImageDraw.Draw(image)
    centre_row, centre_col = height // 2, width // 2
    _draw_agent(draw, centre_row, centre_col, 0, cell_size)
    return image


def render_world(env, state, *, cell_size: int = CELL_SIZE) -> Image.Image:
    walls = env.layout.walls
    pixels = np.empty(walls.shape + (3,), dtype=np.uint8)
    pixels[...] = FLOOR_COLOUR
    pixels[walls] = CHANNEL_COLOURS["wall"]
    for cells, name in ((state.kits, "kit"), (state.poison, "poison"), (state.ammo_packs, "ammo")):
        for row, col in cells:
            pixels[row, col] = CHANNEL_COLOURS[name]
    for monster in state.monsters:
        pixels[monster.row, monster.col] = CHANNEL_COLOURS["monster"]
    for projectile in state.projectiles:
        pixels[projectile.row, projectile.col] = CHANNEL_COLOURS["projectile"]
    image = _upscale(pixels, cell_size)
    _draw_agent(ImageDraw.Draw(image), state.row, state.col, state.facing, cell_size)
    return image


def _draw_agent(draw: ImageDraw.ImageDraw, row: int, col: int, facing: int, cell_size: int) -> None:
    top, left = row * cell_size, col * cell_size
    inset = max(1, cell_size // 6)
    draw.ellipse(
        (left + inset, top + inset, left + cell_size - inset - 1, top + cell_size - inset - 1),
        fill=AGENT_COLOUR,
    )
    dr, dc = DIRECTIONS[facing]
    centre = (left + cell_size / 2, top + cell_size / 2)
    tip = (centre[0] + dc * cell_size / 2, centre[1] + dr * cell_size / 2)
    draw.line((centre, tip), fill=(255, 255, 255), width=max(1, cell_size // 6))


def save_episode_frames(frames: Iterable[Image.Image], directory: str | Path, *, prefix: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, frame in enumerate(frames):
        path = directory / f"{prefix}_{index:05d}.png"
        frame.save(path, format="PNG")
        paths.append(path)
    return paths


def render_episode(net, env, goal, seed: int, *, cell_size: int = CELL_SIZE) -> list[Image.Image]:
    """Full-map frames of one greedy episode of ``net`` under ``goal``."""
    goal_vector = build_goal_vector(goal, n_measurements=net.config.predicted_count, n_offsets=net.config.n_offsets)
    rng = np.random.default_rng(seed)
    state, observation = env.reset(rng)
    frames = [render_world(env, state, cell_size=cell_size)]
    terminal = False
    while not terminal:
        action = select_action(net, observation, goal_vector, 0.0, rng)
        state, observation, terminal = env.step(state, action)
        frames.append(render_world(env, state, cell_size=cell_size))
    return frames
