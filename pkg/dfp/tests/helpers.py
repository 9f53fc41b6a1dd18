"""Shared fixtures for the test suite: tiny configs, gradient checks, toy envs."""
from __future__ import annotations

import os
import unittest
from dataclasses import dataclass, replace

import numpy as np

from dfp.envs import GridWorld, scenario_config
from dfp.numerics import ParameterStore, Tape, Tensor
from dfp.predictor import PredictorConfig, PredictorNet
from dfp.trainer import TrainConfig

FD_STEP = 1e-6
FD_TOLERANCE = 1e-4


def relative_error(analytic, numeric, *, floor: float = 1e-4) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def numeric_gradient(loss_fn, values: np.ndarray, *, step: float = FD_STEP, indices=None) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to ``values`` (modified in place)."""
    grad = np.zeros_like(values, dtype=np.float64)
    flat = values.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        original = flat[i]
        flat[i] = original + step
        plus = loss_fn()
        flat[i] = original - step
        minus = loss_fn()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * step)
    return grad


def to_float64(net: PredictorNet) -> PredictorNet:
    store = ParameterStore()
    for name, tensor in net.store.items():
        store.add(name, Tensor(tensor.values, dtype=np.float64))
    return PredictorNet(net.config, store)


def tiny_predictor_config(**overrides) -> PredictorConfig:
    config = PredictorConfig(
        image_shape=(7, 7, 3),
        n_measurements=3,
        n_offsets=2,
        n_actions=4,
        conv_channels=(4, 4),
        conv_kernels=(3, 2),
        conv_strides=(2, 1),
        perception_width=8,
        measurement_widths=(6, 5),
        goal_widths=(6, 5),
        stream_width=8,
    )
    return replace(config, **overrides)


def small_env_factory(scenario: str = "G1", **overrides):
    defaults = {"height": 12, "width": 12, "view_radius": 3, "episode_cap": 40}
    if scenario.startswith(("G2", "G4")):
        defaults.update(height=13, width=13)
    defaults.update(overrides)
    config = scenario_config(scenario, **defaults)
    return lambda: GridWorld(config)


def small_train_config(**overrides) -> TrainConfig:
    config = TrainConfig(
        total_steps=200,
        memory_capacity=500,
        batch_size=8,
        update_interval=40,
        actors=1,
        deterministic=True,
        eval_every=100,
        eval_episodes=2,
        calibration_steps=0,
        learning_rate=1e-3,
        seed=3,
    )
    return replace(config, **overrides)


def small_predictor_config(**overrides) -> PredictorConfig:
    """Predictor sized for the 7x7 windows of :func:`small_env_factory`."""
    config = PredictorConfig(
        conv_channels=(4, 8),
        conv_kernels=(3, 3),
        conv_strides=(1, 2),
        perception_width=16,
        measurement_widths=(8, 8),
        goal_widths=(8, 8),
        stream_width=16,
    )
    return replace(config, **overrides)


@dataclass
class ToyObservation:
    sensory: np.ndarray
    measurements: np.ndarray


slow_tests = unittest.skipUnless(
    os.environ.get("DFP_SLOW_TESTS") == "1", "set DFP_SLOW_TESTS=1 to run long acceptance tests"
)


def assert_gradients_match(testcase, build_loss, params, *, per_tensor=None, seed=0):
    """Compare tape gradients of ``build_loss(tape)`` with central differences.

    ``params`` must hold float64 tensors. With ``per_tensor`` only that many
    randomly chosen entries of each tensor are checked.
    """
    for param in params:
        param.grad = None
    tape = Tape()
    tape.backward(build_loss(tape))

    rng = np.random.default_rng(seed)
    for param in params:
        analytic = np.zeros_like(param.values) if param.grad is None else param.grad.copy()
        size = param.values.size
        indices = None
        if per_tensor is not None and per_tensor < size:
            indices = rng.choice(size, per_tensor, replace=False)
        numeric = numeric_gradient(lambda: float(build_loss(None).values), param.values, indices=indices)
        selection = slice(None) if indices is None else indices
        testcase.assertLess(
            relative_error(analytic.reshape(-1)[selection], numeric.reshape(-1)[selection]),
            FD_TOLERANCE,
        )


class CountingEnv:
    """Deterministic toy environment: measurements are (t, 5) and episodes last ``length`` steps."""

    measurement_names = ("t", "constant")
    n_actions = 2
    n_measurements = 2
    observation_shape = (3, 3, 1)

    def __init__(self, length: int = 10) -> None:
        self.length = length

    def _observe(self, t: int) -> ToyObservation:
        return ToyObservation(np.zeros(self.observation_shape, dtype=np.uint8), np.asarray((t, 5.0), dtype=np.float32))

    def reset(self, rng):
        return 0, self._observe(0)

    def step(self, state, action):
        state += 1
        return state, self._observe(state), state >= self.length
