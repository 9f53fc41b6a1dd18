import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy import stats

from dfp.agent import (
    BATTLE_WEIGHTS,
    DEFAULT_OFFSET_COEFFS,
    EpsilonSchedule,
    GoalRegime,
    GoalSpec,
    build_goal_vector,
    epsilon_value,
    parse_goal,
    sample_goal,
    select_action,
    select_actions,
)
from dfp.exceptions import InvalidArgument
from dfp.predictor import build_predictor, choose_action, forward

from .helpers import ToyObservation, tiny_predictor_config


class GoalVectorTests(SimpleTestCase):
    def test_offset_major_layout(self):
        vector = build_goal_vector(GoalSpec(BATTLE_WEIGHTS), n_measurements=3, n_offsets=6)
        self.assertEqual(vector.dtype, np.float32)
        expected = [0.0] * 9 + [0.25, 0.25, 0.5, 0.25, 0.25, 0.5, 0.5, 0.5, 1.0]
        assert_allclose(vector, expected)

    def test_size_checks(self):
        with self.assertRaises(InvalidArgument):
            build_goal_vector(GoalSpec((1.0, 1.0)), n_measurements=3)
        with self.assertRaises(InvalidArgument):
            build_goal_vector(GoalSpec((1.0,), (1.0, 1.0)), n_offsets=6)
        with self.assertRaises(InvalidArgument):
            build_goal_vector(GoalSpec(()))

    def test_default_offset_coefficients(self):
        self.assertEqual(GoalSpec((1.0,)).offset_coeffs, DEFAULT_OFFSET_COEFFS)


class EpsilonTests(SimpleTestCase):
    def setUp(self):
        self.schedule = EpsilonSchedule(start=1.0, end=0.1, decay_fraction=0.5)

    def test_linear_decay_then_constant(self):
        self.assertEqual(epsilon_value(self.schedule, 0, 1000), 1.0)
        self.assertAlmostEqual(epsilon_value(self.schedule, 250, 1000), 0.55)
        self.assertEqual(epsilon_value(self.schedule, 500, 1000), 0.1)
        self.assertEqual(epsilon_value(self.schedule, 900, 1000), 0.1)

    def test_zero_horizon_uses_end_value(self):
        self.assertEqual(epsilon_value(self.schedule, 0, 0), 0.1)
        no_decay = EpsilonSchedule(start=1.0, end=0.3, decay_fraction=0.0)
        self.assertEqual(epsilon_value(no_decay, 0, 1000), 0.3)


class SelectActionTests(SimpleTestCase):
    def setUp(self):
        self.config = tiny_predictor_config()
        self.net = build_predictor(self.config, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        self.observation = ToyObservation(
            rng.integers(0, 2, size=self.config.image_shape).astype(np.uint8),
            np.array([1.0, 2.0, 3.0], dtype=np.float32),
        )
        self.goal = rng.normal(size=self.config.dim_f).astype(np.float32)

    def test_greedy_picks_best_prediction(self):
        expected = choose_action(forward(self.net, self.observation.sensory, self.observation.measurements, self.goal), self.goal)
        action = select_action(self.net, self.observation, self.goal, 0.0, np.random.default_rng(5))
        self.assertEqual(action, expected)

    def test_full_exploration_covers_every_action(self):
        rng = np.random.default_rng(2)
        actions = {select_action(self.net, self.observation, self.goal, 1.0, rng) for _ in range(200)}
        self.assertEqual(actions, set(range(self.config.n_actions)))

    def test_random_actions_are_uniform(self):
        rng = np.random.default_rng(8)
        draws = [select_action(self.net, self.observation, self.goal, 1.0, rng) for _ in range(4000)]
        counts = np.bincount(draws, minlength=self.config.n_actions)
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-3)

    def test_same_seed_same_actions(self):
        def actions(seed):
            rng = np.random.default_rng(seed)
            return [select_action(self.net, self.observation, self.goal, 0.5, rng) for _ in range(50)]

        self.assertEqual(actions(12), actions(12))

    def test_epsilon_range_checked(self):
        with self.assertRaises(InvalidArgument):
            select_action(self.net, self.observation, self.goal, 1.5, np.random.default_rng(0))


class SelectActionsTests(SimpleTestCase):
    def setUp(self):
        self.config = tiny_predictor_config()
        self.net = build_predictor(self.config, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        self.observations = [
            ToyObservation(
                rng.integers(0, 2, size=self.config.image_shape).astype(np.uint8),
                rng.normal(size=self.config.n_measurements).astype(np.float32),
            )
            for _ in range(6)
        ]
        self.goals = rng.normal(size=(6, self.config.dim_f)).astype(np.float32)

    def test_greedy_batch_matches_single_choices(self):
        rngs = [np.random.default_rng(i) for i in range(6)]
        actions = select_actions(self.net, self.observations, self.goals, 0.0, rngs)
        for observation, goal, action in zip(self.observations, self.goals, actions):
            predictions = forward(self.net, observation.sensory, observation.measurements, goal)
            self.assertEqual(action, choose_action(predictions, goal))

    def test_exploration_draws_from_each_generator(self):
        batched = select_actions(
            self.net, self.observations, self.goals, 0.5, [np.random.default_rng([3, i]) for i in range(6)]
        )
        single = [
            select_action(self.net, observation, goal, 0.5, np.random.default_rng([3, i]))
            for i, (observation, goal) in enumerate(zip(self.observations, self.goals))
        ]
        self.assertEqual(batched, single)

    def test_lengths_must_agree(self):
        with self.assertRaises(InvalidArgument):
            select_actions(self.net, self.observations, self.goals[:3], 0.0, [np.random.default_rng(0)] * 6)


class SampleGoalTests(SimpleTestCase):
    def setUp(self):
        self.base = GoalSpec(BATTLE_WEIGHTS)

    def test_fixed_regime_returns_base(self):
        self.assertIs(sample_goal(GoalRegime.FIXED, self.base, np.random.default_rng(0)), self.base)

    def test_random_regimes_only_change_weights(self):
        goal = sample_goal("uniform01", self.base, np.random.default_rng(0))
        self.assertEqual(goal.offset_coeffs, self.base.offset_coeffs)
        self.assertEqual(len(goal.weights), 3)

    def test_uniform_ranges(self):
        rng = np.random.default_rng(3)
        unit = np.array([sample_goal(GoalRegime.UNIFORM01, self.base, rng).weights for _ in range(1000)]).ravel()
        symmetric = np.array([sample_goal(GoalRegime.UNIFORM_SYM, self.base, rng).weights for _ in range(1000)]).ravel()
        self.assertTrue(((unit >= 0) & (unit <= 1)).all())
        self.assertTrue(((symmetric >= -1) & (symmetric <= 1)).all())
        self.assertGreater(stats.kstest(unit, "uniform", args=(0, 1)).pvalue, 1e-3)
        self.assertGreater(stats.kstest(symmetric, "uniform", args=(-1, 2)).pvalue, 1e-3)

    def test_unknown_regime(self):
        with self.assertRaises(ValueError):
            sample_goal("gaussian", self.base, np.random.default_rng(0))


class ParseGoalTests(SimpleTestCase):
    def test_parses_comma_separated_weights(self):
        self.assertEqual(parse_goal("0.5, 0.5,1"), (0.5, 0.5, 1.0))
        self.assertEqual(parse_goal("-1"), (-1.0,))

    def test_rejects_bad_input(self):
        for text in ("", " , ", "a,b", "1,nan"):
            with self.subTest(text=text), self.assertRaises(InvalidArgument):
                parse_goal(text)
