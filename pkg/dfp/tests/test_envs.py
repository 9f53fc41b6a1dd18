import tempfile
from functools import partial
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal
from scipy import ndimage

from dfp.envs import (
    BATTLE_SUB_ACTIONS,
    NAVIGATION_SUB_ACTIONS,
    ActionSet,
    GridWorld,
    format_map,
    make_appearance_split,
    maze_layout,
    parse_map,
    reset,
    room_layout,
    scenario_config,
    step,
)
from dfp.envs.gridworld import DIRECTIONS, STRUCTURE_CHANNELS
from dfp.exceptions import InvalidArgument, InvalidState
from dfp.trainer import evaluate_random_policy

from .helpers import small_env_factory

FORWARD = 1
TURN_RIGHT_NAV = 4
TURN_RIGHT_BATTLE = 8
SHOOT = 16
WALL = STRUCTURE_CHANNELS.index("wall")


class MapWorldTestCase(SimpleTestCase):
    """Builds worlds from small text maps written to a temporary directory."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def world(self, scenario, text, **overrides):
        path = Path(self.tmp.name) / f"{scenario}.map"
        path.write_text(text, encoding="utf-8")
        return GridWorld(scenario_config(scenario, map_file=str(path), view_radius=2, **overrides))

    def face(self, env, state, facing, turn_action):
        while state.facing != facing:
            state, _, _ = env.step(state, turn_action)
        return state


class LayoutTests(SimpleTestCase):
    MAP = "#####\n#S.K#\n#P.M#\n#..A#\n#####\n"

    def test_parse_and_format(self):
        layout = parse_map(self.MAP)
        self.assertEqual(layout.shape, (5, 5))
        self.assertEqual(layout.spawns["agent"], ((1, 1),))
        self.assertEqual(layout.region("monster"), ((2, 3),))
        self.assertEqual(len(layout.region("floor-anything")), 9)
        self.assertEqual(format_map(layout), self.MAP)

    def test_outside_the_map_is_wall(self):
        layout = parse_map(self.MAP)
        self.assertTrue(layout.is_wall(-1, 2))
        self.assertTrue(layout.is_wall(2, 5))
        self.assertFalse(layout.is_wall(2, 2))

    def test_malformed_maps(self):
        for text in ("", "###\n##\n", "#x#\n", "###\n###\n"):
            with self.subTest(text=text), self.assertRaises(InvalidArgument):
                parse_map(text)

    def test_room(self):
        layout = room_layout(6, 8)
        self.assertEqual(len(layout.floor), 4 * 6)
        with self.assertRaises(InvalidArgument):
            room_layout(2, 8)

    def test_maze_is_connected_walled_and_seeded(self):
        first = maze_layout(25, 25, np.random.default_rng(3))
        second = maze_layout(25, 25, np.random.default_rng(3))
        assert_array_equal(first.walls, second.walls)
        walls = first.walls
        self.assertTrue(walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all())
        _, components = ndimage.label(~walls)
        self.assertEqual(components, 1)
        with self.assertRaises(InvalidArgument):
            maze_layout(5, 5, np.random.default_rng(0))


class PaletteTests(SimpleTestCase):
    def test_split_is_disjoint(self):
        train, test = make_appearance_split(100, 0.9, np.random.default_rng(0))
        self.assertEqual((len(train), len(test)), (90, 10))
        self.assertFalse({p.palette_id for p in train} & {p.palette_id for p in test})
        self.assertEqual(len({p.codes for p in train + test}), 100)

    def test_split_needs_both_sides(self):
        with self.assertRaises(InvalidArgument):
            make_appearance_split(10, 1.0)

    def test_worlds_draw_from_their_palette_set(self):
        fixed = GridWorld(scenario_config("G3"))
        randomized = GridWorld(scenario_config("G3-tx"))
        held_out = GridWorld(scenario_config("G3-tx", palette_set="test"))
        self.assertEqual(len(fixed.palettes), 1)
        self.assertEqual(len(randomized.palettes), 90)
        self.assertFalse(
            {p.palette_id for p in randomized.palettes} & {p.palette_id for p in held_out.palettes}
        )


class ScenarioConfigTests(SimpleTestCase):
    def test_defaults_resolve_per_scenario(self):
        navigation = GridWorld(scenario_config("G1"))
        battle = GridWorld(scenario_config("G4"))
        self.assertEqual(navigation.measurement_names, ("health",))
        self.assertEqual(battle.measurement_names, ("ammo", "health", "frags"))
        self.assertEqual(navigation.n_actions, 8)
        self.assertEqual(battle.n_actions, 32)
        self.assertEqual(navigation.observation_shape, (15, 15, 10))
        self.assertEqual(battle.layout.shape, (48, 48))

    def test_bad_names_and_settings(self):
        with self.assertRaises(InvalidArgument):
            scenario_config("G1-xx")
        with self.assertRaises(InvalidArgument):
            scenario_config("G1", speed=3)
        with self.assertRaises(InvalidArgument):
            GridWorld(scenario_config("G5"))
        with self.assertRaises(InvalidArgument):
            GridWorld(scenario_config("G1", sub_actions=("forward", "jump")))

    def test_action_set_bits(self):
        actions = ActionSet(BATTLE_SUB_ACTIONS)
        self.assertEqual(actions.decode(0), frozenset())
        self.assertEqual(actions.decode(TURN_RIGHT_BATTLE | SHOOT), {"turn_right", "shoot"})
        self.assertEqual(len(set(actions.combinations())), 32)
        self.assertEqual(ActionSet(NAVIGATION_SUB_ACTIONS).decode(TURN_RIGHT_NAV), {"turn_right"})
        with self.assertRaises(InvalidArgument):
            actions.decode(32)


class DynamicsTests(MapWorldTestCase):
    def test_same_seed_and_actions_replay_exactly(self):
        env = small_env_factory("G4")()
        actions = np.random.default_rng(0).integers(env.n_actions, size=30)

        def rollout():
            state, observation = reset(env, np.random.default_rng(11))
            trace = [(observation.sensory, observation.measurements)]
            for action in actions:
                if state.terminal:
                    break
                state, observation, _ = step(env, state, int(action))
                trace.append((observation.sensory, observation.measurements))
            return trace

        for (s1, m1), (s2, m2) in zip(rollout(), rollout(), strict=True):
            assert_array_equal(s1, s2)
            assert_array_equal(m1, m2)

    def test_health_decays_and_episode_cap_ends(self):
        env = small_env_factory("G1", kit_density=0.0, episode_cap=5)()
        state, observation = env.reset(np.random.default_rng(0))
        self.assertEqual(observation.measurements.tolist(), [100.0])
        for expected in (99, 98, 97, 96):
            state, observation, terminal = env.step(state, 0)
            self.assertEqual(observation.measurements.tolist(), [expected])
            self.assertFalse(terminal)
        state, _, terminal = env.step(state, 0)
        self.assertTrue(terminal)
        with self.assertRaises(InvalidState):
            env.step(state, 0)

    def test_frame_skip_repeats_the_action(self):
        env = small_env_factory("G1", kit_density=0.0, frame_skip=3)()
        state, _ = env.reset(np.random.default_rng(0))
        state, observation, _ = env.step(state, 0)
        self.assertEqual(observation.measurements.tolist(), [97.0])
        self.assertEqual(state.frame, 3)

    def test_view_is_rotated_to_face_up(self):
        env = self.world("G1", "#####\n#S..#\n#####\n", health_decay=0, kit_density=0.0)
        seen = set()
        for seed in range(40):
            state, observation = env.reset(np.random.default_rng(seed))
            dr, dc = DIRECTIONS[state.facing]
            ahead = env.layout.is_wall(state.row + dr, state.col + dc)
            self.assertEqual(bool(observation.sensory[1, 2, WALL]), ahead)
            seen.add(state.facing)
        self.assertEqual(seen, {0, 1, 2, 3})

    def test_poison_and_kits_change_health(self):
        env = self.world("G2", "######\n#SPK.#\n######\n", health_decay=0)
        state, _ = env.reset(np.random.default_rng(0))
        self.assertEqual(state.poison, {(1, 2)})
        self.assertEqual(state.kits, {(1, 3)})
        state = self.face(env, state, 1, TURN_RIGHT_NAV)
        state, observation, _ = env.step(state, FORWARD)
        self.assertEqual(observation.measurements.tolist(), [70.0])
        state, observation, _ = env.step(state, FORWARD)
        self.assertEqual(observation.measurements.tolist(), [95.0])
        self.assertEqual(state.position, (1, 3))

    def test_walls_block_movement(self):
        env = self.world("G1", "####\n#S.#\n####\n", health_decay=0, kit_density=0.0)
        state, _ = env.reset(np.random.default_rng(0))
        state = self.face(env, state, 3, TURN_RIGHT_NAV)
        state, _, _ = env.step(state, FORWARD)
        self.assertEqual(state.position, (1, 1))

    def test_shooting_a_monster_scores_a_frag(self):
        env = self.world(
            "G3", "#######\n#S...M#\n#######\n", kit_density=0.0, ammo_density=0.0, projectile_probability=0.0
        )
        state, _ = env.reset(np.random.default_rng(0))
        self.assertEqual([(m.row, m.col) for m in state.monsters], [(1, 5)])
        state = self.face(env, state, 1, TURN_RIGHT_BATTLE)
        state, observation, _ = env.step(state, SHOOT)
        ammo, _, frags = observation.measurements.tolist()
        self.assertEqual((ammo, frags), (14.0, 1.0))

    def test_no_ammo_no_frags(self):
        env = self.world(
            "G3", "#######\n#S...M#\n#######\n",
            kit_density=0.0, ammo_density=0.0, projectile_probability=0.0, ammo_start=0,
        )
        state, _ = env.reset(np.random.default_rng(0))
        state = self.face(env, state, 1, TURN_RIGHT_BATTLE)
        state, observation, _ = env.step(state, SHOOT)
        self.assertEqual(observation.measurements.tolist()[::2], [0.0, 0.0])

    def test_adjacent_monster_hurts(self):
        env = self.world(
            "G3", "######\n#S..M#\n######\n",
            kit_density=0.0, ammo_density=0.0, projectile_probability=0.0, monster_move_period=1,
        )
        state, _ = env.reset(np.random.default_rng(0))
        healths = []
        for _ in range(4):
            state, observation, _ = env.step(state, 0)
            healths.append(observation.measurements[1])
        self.assertLess(healths[-1], 100.0)


FORWARD_BATTLE = 1
BACKWARD_BATTLE = 2
TURN_LEFT_BATTLE = 4
MONSTER = STRUCTURE_CHANNELS.index("monster")
PROJECTILE = STRUCTURE_CHANNELS.index("projectile")

TRACE_MAP = "#######\n#S..A.#\n#.K..P#\n#######\n"

# (action, position, facing, (ammo, health, frags)) after each step, starting
# at (1, 1) facing east with (15, 100, 0).
GOLDEN_TRACE = (
    (FORWARD_BATTLE, (1, 2), 1, (15, 100, 0)),
    (FORWARD_BATTLE, (1, 3), 1, (15, 100, 0)),
    (FORWARD_BATTLE, (1, 4), 1, (25, 100, 0)),
    (SHOOT, (1, 4), 1, (24, 100, 0)),
    (TURN_RIGHT_BATTLE, (1, 4), 2, (24, 100, 0)),
    (FORWARD_BATTLE, (2, 4), 2, (24, 100, 0)),
    (TURN_LEFT_BATTLE, (2, 4), 1, (24, 100, 0)),
    (FORWARD_BATTLE, (2, 5), 1, (24, 70, 0)),
    (TURN_RIGHT_BATTLE, (2, 5), 2, (24, 70, 0)),
    (TURN_RIGHT_BATTLE, (2, 5), 3, (24, 70, 0)),
    (FORWARD_BATTLE, (2, 4), 3, (24, 70, 0)),
    (FORWARD_BATTLE, (2, 3), 3, (24, 70, 0)),
    (FORWARD_BATTLE, (2, 2), 3, (24, 95, 0)),
    (TURN_LEFT_BATTLE, (2, 2), 2, (24, 95, 0)),
    (FORWARD_BATTLE, (2, 2), 2, (24, 95, 0)),
    (TURN_RIGHT_BATTLE | FORWARD_BATTLE, (2, 1), 3, (24, 95, 0)),
    (BACKWARD_BATTLE, (2, 2), 3, (24, 100, 0)),
)


def random_rollout(env, steps, seed):
    """Observations and states of a random policy, resetting after each episode."""
    rng = np.random.default_rng(seed)
    state, observation = env.reset(rng)
    episode = 0
    for _ in range(steps):
        state, observation, terminal = env.step(state, int(rng.integers(env.n_actions)))
        yield episode, state, observation
        if terminal:
            episode += 1
            state, observation = env.reset(rng)


class GoldenTraceTests(MapWorldTestCase):
    def test_fixed_rollout_on_a_small_map(self):
        env = self.world("G3", TRACE_MAP, monster_density=0.0, poison_density=0.01)
        state, observation = env.reset(np.random.default_rng(0))
        self.assertEqual((state.kits, state.poison, state.ammo_packs), ({(2, 2)}, {(2, 5)}, {(1, 4)}))
        self.assertEqual(observation.measurements.tolist(), [15.0, 100.0, 0.0])
        state = self.face(env, state, 1, TURN_RIGHT_BATTLE)
        for index, (action, position, facing, measurements) in enumerate(GOLDEN_TRACE):
            state, observation, terminal = env.step(state, action)
            with self.subTest(step=index):
                self.assertEqual((state.position, state.facing), (position, facing))
                self.assertEqual(tuple(observation.measurements.tolist()), measurements)
                self.assertFalse(terminal)
        # Items come back once the agent steps off their only spawn cell.
        self.assertEqual((state.kits, state.poison, state.ammo_packs), (set(), {(2, 5)}, {(1, 4)}))


class InvariantTests(MapWorldTestCase):
    def test_health_kits_cap_at_full_health(self):
        env = self.world("G1", "#####\n#SK.#\n#####\n", health_decay=0)
        state, _ = env.reset(np.random.default_rng(0))
        state = self.face(env, state, 1, TURN_RIGHT_NAV)
        state.health = 90
        state, observation, _ = env.step(state, FORWARD)
        self.assertEqual(observation.measurements.tolist(), [100.0])

    def test_battle_scenarios_start_with_full_health_and_ammo(self):
        for scenario in ("G3", "G4", "G3-tx"):
            with self.subTest(scenario=scenario):
                _, observation = GridWorld(scenario_config(scenario)).reset(np.random.default_rng(5))
                self.assertEqual(observation.measurements.tolist(), [15.0, 100.0, 0.0])

    def test_observation_only_depends_on_the_view_window(self):
        env = small_env_factory("G1")()
        state, _ = env.reset(np.random.default_rng(4))
        radius = env.config.view_radius
        before = env.observe(state).sensory

        def distance(cell):
            return max(abs(cell[0] - state.row), abs(cell[1] - state.col))

        far = next(cell for cell in env.layout.floor if distance(cell) > radius and cell not in state.kits)
        state.kits.add(far)
        assert_array_equal(env.observe(state).sensory, before)

        near = next(
            cell for cell in env.layout.floor if distance(cell) == 1 and cell not in state.kits
        )
        state.kits.add(near)
        self.assertFalse(np.array_equal(env.observe(state).sensory, before))

    def test_frags_never_decrease_within_an_episode(self):
        env = small_env_factory("G3", monster_density=0.05)()
        last = {}
        for episode, state, observation in random_rollout(env, 600, seed=6):
            frags = observation.measurements[2]
            self.assertGreaterEqual(frags, last.get(episode, 0.0))
            last[episode] = frags

    def test_health_scenario_never_shows_monsters(self):
        env = small_env_factory("G1")()
        for _, _, observation in random_rollout(env, 300, seed=2):
            self.assertFalse(observation.sensory[..., MONSTER].any())
            self.assertFalse(observation.sensory[..., PROJECTILE].any())

    def test_poison_lowers_terminal_health(self):
        navigation = evaluate_random_policy(partial(GridWorld, scenario_config("G1")), 200, seed=0)
        poisoned = evaluate_random_policy(partial(GridWorld, scenario_config("G2")), 200, seed=0)
        self.assertLess(poisoned.mean_of("health"), navigation.mean_of("health"))
