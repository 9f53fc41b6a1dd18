import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from PIL import Image

from dfp.agent import GoalSpec
from dfp.envs.gridworld import STRUCTURE_CHANNELS
from dfp.predictor import build_predictor
from dfp.render import (
    AGENT_COLOUR,
    CELL_SIZE,
    CHANNEL_COLOURS,
    FLOOR_COLOUR,
    render_episode,
    render_sensory,
    render_world,
    save_episode_frames,
)

from .helpers import small_env_factory, small_predictor_config


class RenderTests(SimpleTestCase):
    def test_sensory_window(self):
        sensory = np.zeros((7, 7, len(STRUCTURE_CHANNELS)), dtype=np.uint8)
        sensory[0, :, STRUCTURE_CHANNELS.index("wall")] = 1
        sensory[2, 3, STRUCTURE_CHANNELS.index("monster")] = 1
        image = render_sensory(sensory)
        self.assertEqual(image.size, (7 * CELL_SIZE, 7 * CELL_SIZE))
        self.assertEqual(image.getpixel((1, 1)), CHANNEL_COLOURS["wall"])
        self.assertEqual(image.getpixel((3 * CELL_SIZE + 1, 2 * CELL_SIZE + 1)), CHANNEL_COLOURS["monster"])
        self.assertEqual(image.getpixel((CELL_SIZE + 1, 5 * CELL_SIZE + 1)), FLOOR_COLOUR)
        # Off-centre pixel of the agent disc, away from the heading line.
        centre = 3 * CELL_SIZE + CELL_SIZE // 2
        self.assertEqual(image.getpixel((centre - 2, centre + 1)), AGENT_COLOUR)

    def test_world_map(self):
        env = small_env_factory("G3")()
        state, _ = env.reset(np.random.default_rng(0))
        image = render_world(env, state, cell_size=4)
        height, width = env.layout.shape
        self.assertEqual(image.size, (width * 4, height * 4))
        self.assertEqual(image.getpixel((0, 0)), CHANNEL_COLOURS["wall"])

    def test_episode_frames(self):
        factory = small_env_factory("G1", episode_cap=6)
        env = factory()
        config = small_predictor_config(image_shape=env.observation_shape, n_measurements=1, n_actions=env.n_actions)
        net = build_predictor(config, np.random.default_rng(0))
        frames = render_episode(net, env, GoalSpec((1.0,)), seed=2, cell_size=3)
        self.assertEqual(len(frames), 7)
        with tempfile.TemporaryDirectory() as tmp:
            paths = save_episode_frames(frames, Path(tmp) / "frames")
            self.assertEqual([path.name for path in paths[:2]], ["frame_00000.png", "frame_00001.png"])
            with Image.open(paths[-1]) as saved:
                self.assertEqual(saved.size, frames[-1].size)
