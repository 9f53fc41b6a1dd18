"""Goals, exploration schedule and action selection."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .exceptions import InvalidArgument
from .numerics import DTYPE
from .predictor import PredictorNet, choose_action, choose_actions, forward

logger = logging.getLogger(__name__)

# Only the three farthest offsets (8, 16, 32 steps) enter the objective.
DEFAULT_OFFSET_COEFFS = (0.0, 0.0, 0.0, 0.5, 0.5, 1.0)

# Measurement weights for ammo, health and frags in the battle scenarios.
BATTLE_WEIGHTS = (0.5, 0.5, 1.0)


@dataclass(frozen=True)
class GoalSpec:
    weights: tuple[float, ...]
    offset_coeffs: tuple[float, ...] = DEFAULT_OFFSET_COEFFS

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "offset_coeffs", tuple(float(c) for c in self.offset_coeffs))


class GoalRegime(str, Enum):
    FIXED = "fixed"
    UNIFORM01 = "uniform01"
    UNIFORM_SYM = "uniform_sym"


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.02
    decay_fraction: float = 0.6


def build_goal_vector(
    spec: GoalSpec,
    *,
    n_measurements: int | None = None,
    n_offsets: int | None = None,
) -> np.ndarray:
    """Flatten a goal offset-major: component i*n_m + j is coeff[i] * weight[j]."""
    if n_measurements is not None and len(spec.weights) != n_measurements:
        raise InvalidArgument(
            f"goal has {len(spec.weights)} measurement weights, expected {n_measurements}"
        )
    if n_offsets is not None and len(spec.offset_coeffs) != n_offsets:
        raise InvalidArgument(
            f"goal has {len(spec.offset_coeffs)} offset coefficients, expected {n_offsets}"
        )
    if not spec.weights or not spec.offset_coeffs:
        raise InvalidArgument("goal weights and offset coefficients must be non-empty")
    coeffs = np.asarray(spec.offset_coeffs, dtype=np.float64)
    weights = np.asarray(spec.weights, dtype=np.float64)
    return np.outer(coeffs, weights).ravel().astype(DTYPE)


def epsilon_value(schedule: EpsilonSchedule, step: int, total_steps: int) -> float:
    """Linear decay from ``start`` to ``end`` over ``decay_fraction * total_steps``, then ``end``.

    An empty horizon (``total_steps`` or ``decay_fraction`` zero) means no
    decay phase at all, so every step gets ``end``.
    """
    horizon = schedule.decay_fraction * total_steps
    if horizon <= 0 or step >= horizon:
        return schedule.end
    return schedule.start + (schedule.end - schedule.start) * (step / horizon)


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgument(f"epsilon must lie in [0, 1], got {epsilon}")


def select_action(
    net: PredictorNet,
    observation,
    goal: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """ε-greedy action for ``observation`` (anything with sensory/measurements)."""
    _check_epsilon(epsilon)
    if rng.random() < epsilon:
        return int(rng.integers(net.config.n_actions))
    predictions = forward(net, observation.sensory, observation.measurements, goal)
    return choose_action(predictions, goal)


def select_actions(
    net: PredictorNet,
    observations: Sequence,
    goals: np.ndarray,
    epsilon: float,
    rngs: Sequence[np.random.Generator],
) -> list[int]:
    """ε-greedy actions for several observations with one forward pass.

    Observation ``i`` draws its exploration coin and random action from
    ``rngs[i]`` in the same order as :func:`select_action`.
    """
    _check_epsilon(epsilon)
    if not len(observations) == len(goals) == len(rngs):
        raise InvalidArgument("observations, goals and rngs must have the same length")
    actions: list[int | None] = [None] * len(observations)
    greedy = []
    for index, rng in enumerate(rngs):
        if rng.random() < epsilon:
            actions[index] = int(rng.integers(net.config.n_actions))
        else:
            greedy.append(index)
    if greedy:
        goals = np.asarray(goals)[greedy]
        predictions = net.forward_batch(
            np.stack([observations[i].sensory for i in greedy]),
            np.stack([observations[i].measurements for i in greedy]),
            goals,
        ).values
        for index, action in zip(greedy, choose_actions(predictions, goals)):
            actions[index] = int(action)
    return actions


def sample_goal(regime: GoalRegime | str, base: GoalSpec, rng: np.random.Generator) -> GoalSpec:
    """Draw an episode goal; only measurement weights are randomized."""
    regime = GoalRegime(regime)
    if regime is GoalRegime.FIXED:
        return base
    size = len(base.weights)
    if regime is GoalRegime.UNIFORM01:
        weights = rng.uniform(0.0, 1.0, size=size)
    else:
        weights = rng.uniform(-1.0, 1.0, size=size)
    return replace(base, weights=tuple(weights))


def parse_goal(text: str) -> tuple[float, ...]:
    """Parse CLI goal weights such as ``0.5,0.5,1``."""
    pieces = [piece.strip() for piece in str(text).split(",")]
    pieces = [piece for piece in pieces if piece]
    if not pieces:
        raise InvalidArgument("goal needs at least one weight")
    try:
        weights = tuple(float(piece) for piece in pieces)
    except ValueError as exc:
        raise InvalidArgument(f"goal weights must be numbers, got {text!r}") from exc
    if not all(np.isfinite(weights)):
        raise InvalidArgument(f"goal weights must be finite, got {text!r}")
    return weights
