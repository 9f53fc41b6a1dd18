"""The future predictor F(o, a, g; θ).

Three input modules (perception S, measurement M, goal G) feed a joint
representation j. An expectation stream E(j) predicts the action-averaged
future measurements and an action stream A(j) predicts per-action
deviations, normalized to zero mean over actions. Row ``a`` of the output
is ``Ā^a(j) + E(j)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidArgument, ShapeError
from .numerics import (
    DTYPE,
    ParameterStore,
    Tape,
    Tensor,
    add_expectation,
    concat,
    constant,
    conv2d,
    dense,
    flatten,
    he_init,
    leaky_relu,
    reshape,
    subtract_action_mean,
    zeros,
)

logger = logging.getLogger(__name__)

# Rows are actions, columns are the dim(f) predicted differences (offset-major).
PredictionSet = np.ndarray


@dataclass(frozen=True)
class PredictorConfig:
    image_shape: tuple[int, ...] = (15, 15, 10)
    n_measurements: int = 3
    n_offsets: int = 6
    n_actions: int = 32
    # Number of predicted measurements; None predicts all of them.
    n_predicted: int | None = None
    conv_channels: tuple[int, ...] = (16, 32)
    conv_kernels: tuple[int, ...] = (3, 3)
    conv_strides: tuple[int, ...] = (2, 2)
    perception_width: int = 128
    measurement_widths: tuple[int, ...] = (64, 64, 64)
    goal_widths: tuple[int, ...] = (64, 64, 64)
    stream_width: int = 128
    measurement_scales: tuple[float, ...] | None = None
    disable_normalization: bool = False
    disable_split: bool = False
    disable_input_measurements: bool = False

    @property
    def predicted_count(self) -> int:
        return self.n_measurements if self.n_predicted is None else self.n_predicted

    @property
    def dim_f(self) -> int:
        return self.predicted_count * self.n_offsets

    def conv_output_shape(self) -> tuple[int, int, int]:
        height, width, channels = self.image_shape
        for out_channels, kernel, stride in zip(self.conv_channels, self.conv_kernels, self.conv_strides):
            if kernel > height or kernel > width:
                raise ShapeError(f"kernel {kernel} does not fit a {height}x{width} feature map")
            height = (height - kernel) // stride + 1
            width = (width - kernel) // stride + 1
            channels = out_channels
        return height, width, channels

    @property
    def joint_width(self) -> int:
        width = self.perception_width + self.goal_widths[-1]
        if not self.disable_input_measurements:
            width += self.measurement_widths[-1]
        return width

    def validate(self) -> None:
        if self.n_actions < 1:
            raise InvalidArgument("a predictor needs at least one action")
        if self.n_measurements < 1:
            raise InvalidArgument("a predictor needs at least one measurement")
        if self.n_offsets < 1:
            raise InvalidArgument("a predictor needs at least one temporal offset")
        if not 1 <= self.predicted_count <= self.n_measurements:
            raise InvalidArgument(
                f"n_predicted must lie in [1, {self.n_measurements}], got {self.n_predicted}"
            )
        if len(self.image_shape) != 3:
            raise InvalidArgument(f"image_shape must be (H, W, C), got {self.image_shape}")
        if not (len(self.conv_channels) == len(self.conv_kernels) == len(self.conv_strides)):
            raise InvalidArgument("conv_channels, conv_kernels and conv_strides differ in length")
        if not self.measurement_widths or not self.goal_widths:
            raise InvalidArgument("measurement and goal modules need at least one layer")
        if self.measurement_scales is not None and len(self.measurement_scales) != self.n_measurements:
            raise InvalidArgument("measurement_scales must have one entry per measurement")
        self.conv_output_shape()


PRESETS = ("desk", "desk-large", "a1")

# Measurement scales the a1 preset ships with: ammo, health, frags.
A1_MEASUREMENT_SCALES = (7.5, 30.0, 1.0)


def preset_config(name: str, **overrides) -> PredictorConfig:
    """Predictor layer widths for a named preset.

    ``desk-large`` doubles every layer from the third perception layer on.
    ``a1`` mirrors the basic architecture: 84x84x1 input, three
    convolutions (32/8/4, 64/4/2, 64/3/1) and 512/128 wide dense layers.
    """
    if name == "desk":
        config = PredictorConfig()
    elif name == "desk-large":
        config = PredictorConfig(perception_width=256, stream_width=256)
    elif name == "a1":
        config = PredictorConfig(
            image_shape=(84, 84, 1),
            n_actions=256,
            conv_channels=(32, 64, 64),
            conv_kernels=(8, 4, 3),
            conv_strides=(4, 2, 1),
            perception_width=512,
            measurement_widths=(128, 128, 128),
            goal_widths=(128, 128, 128),
            stream_width=512,
            measurement_scales=A1_MEASUREMENT_SCALES,
        )
    else:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return replace(config, **overrides)


class StreamOutputs(NamedTuple):
    prediction: Tensor
    expectation: Tensor | None
    action: Tensor | None


class PredictorNet:
    def __init__(self, config: PredictorConfig, store: ParameterStore) -> None:
        self.config = config
        self.store = store

    def copy(self) -> PredictorNet:
        return PredictorNet(self.config, self.store.copy())

    def _dense(self, name: str, x: Tensor, tape: Tape | None, *, activate: bool = True) -> Tensor:
        out = dense(x, self.store[f"{name}.w"], self.store[f"{name}.b"], tape)
        return leaky_relu(out, tape) if activate else out

    def _check_inputs(self, sensory: np.ndarray, measurements: np.ndarray, goal: np.ndarray) -> bool:
        config = self.config
        batched = sensory.ndim == 4
        image_shape = sensory.shape[1:] if batched else sensory.shape
        if tuple(image_shape) != tuple(config.image_shape):
            raise ShapeError(f"sensory shape {image_shape} does not match {config.image_shape}")
        if measurements.shape[-1] != config.n_measurements:
            raise ShapeError(
                f"expected {config.n_measurements} measurements, got {measurements.shape[-1]}"
            )
        if goal.shape[-1] != config.dim_f:
            raise ShapeError(f"goal length {goal.shape[-1]} does not match dim(f)={config.dim_f}")
        if batched and not (len(sensory) == len(measurements) == len(goal)):
            raise ShapeError("batch sizes of sensory, measurements and goal differ")
        return batched

    def streams(self, sensory, measurements, goal, tape: Tape | None = None) -> StreamOutputs:
        """Run the network on one observation or on a batch (leading axis N)."""
        config = self.config
        sensory = np.asarray(sensory)
        measurements = np.asarray(measurements, dtype=np.float64)
        goal = np.asarray(goal, dtype=DTYPE)
        batched = self._check_inputs(sensory, measurements, goal)
        if config.measurement_scales is not None:
            measurements = measurements / np.asarray(config.measurement_scales, dtype=np.float64)

        h = constant(sensory)
        for index, stride in enumerate(config.conv_strides):
            name = f"perception.conv{index}"
            h = leaky_relu(conv2d(h, self.store[f"{name}.w"], self.store[f"{name}.b"], stride, tape), tape)
        h = flatten(h, tape, batched=batched)
        parts = [self._dense("perception.dense", h, tape)]

        if not config.disable_input_measurements:
            hm = constant(measurements)
            for index in range(len(config.measurement_widths)):
                hm = self._dense(f"measurement.dense{index}", hm, tape)
            parts.append(hm)

        hg = constant(goal)
        for index in range(len(config.goal_widths)):
            hg = self._dense(f"goal.dense{index}", hg, tape)
        parts.append(hg)

        joint = concat(parts, tape)
        rows = (config.n_actions, config.dim_f)
        leading = (sensory.shape[0],) if batched else ()

        if config.disable_split:
            hidden = self._dense("prediction.hidden", joint, tape)
            flat = self._dense("prediction.out", hidden, tape, activate=False)
            return StreamOutputs(reshape(flat, leading + rows, tape), None, None)

        expectation = self._dense(
            "expectation.out", self._dense("expectation.hidden", joint, tape), tape, activate=False
        )
        action_flat = self._dense(
            "action.out", self._dense("action.hidden", joint, tape), tape, activate=False
        )
        action = reshape(action_flat, leading + rows, tape)
        if not config.disable_normalization:
            action = subtract_action_mean(action, tape)
        return StreamOutputs(add_expectation(action, expectation, tape), expectation, action)

    def forward_batch(self, sensory, measurements, goals, tape: Tape | None = None) -> Tensor:
        return self.streams(sensory, measurements, goals, tape).prediction


def build_predictor(config: PredictorConfig, rng: np.random.Generator) -> PredictorNet:
    config.validate()
    store = ParameterStore()

    def add_dense(name: str, fan_in: int, width: int) -> None:
        store.add(f"{name}.w", he_init((fan_in, width), fan_in, rng))
        store.add(f"{name}.b", zeros((width,)))

    channels = config.image_shape[2]
    for index, (out_channels, kernel) in enumerate(zip(config.conv_channels, config.conv_kernels)):
        fan_in = kernel * kernel * channels
        store.add(f"perception.conv{index}.w", he_init((kernel, kernel, channels, out_channels), fan_in, rng))
        store.add(f"perception.conv{index}.b", zeros((out_channels,)))
        channels = out_channels
    add_dense("perception.dense", int(np.prod(config.conv_output_shape())), config.perception_width)

    if not config.disable_input_measurements:
        width = config.n_measurements
        for index, out_width in enumerate(config.measurement_widths):
            add_dense(f"measurement.dense{index}", width, out_width)
            width = out_width

    width = config.dim_f
    for index, out_width in enumerate(config.goal_widths):
        add_dense(f"goal.dense{index}", width, out_width)
        width = out_width

    joint = config.joint_width
    if config.disable_split:
        add_dense("prediction.hidden", joint, config.stream_width)
        add_dense("prediction.out", config.stream_width, config.n_actions * config.dim_f)
    else:
        add_dense("expectation.hidden", joint, config.stream_width)
        add_dense("expectation.out", config.stream_width, config.dim_f)
        add_dense("action.hidden", joint, config.stream_width)
        add_dense("action.out", config.stream_width, config.n_actions * config.dim_f)

    logger.debug(
        "built predictor: %d parameter tensors, joint width %d, dim(f)=%d",
        len(store), joint, config.dim_f,
    )
    return PredictorNet(config, store)


def forward(net: PredictorNet, sensory, measurements, goal) -> PredictionSet:
    """Predictions for every action for a single observation: (w, dim(f))."""
    return net.streams(sensory, measurements, goal).prediction.values


def choose_action(predictions: PredictionSet, goal) -> int:
    """Argmax over actions of g·p^a; ties go to the lowest action index."""
    predictions = np.asarray(predictions, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if predictions.ndim != 2 or predictions.shape[1] != goal.shape[0]:
        raise ShapeError(f"cannot score predictions {predictions.shape} with goal {goal.shape}")
    return int(np.argmax(predictions @ goal))


def choose_actions(predictions: np.ndarray, goals) -> np.ndarray:
    """Row-wise :func:`choose_action` for predictions (N, w, dim(f)) and goals (N, dim(f))."""
    predictions = np.asarray(predictions, dtype=np.float64)
    goals = np.asarray(goals, dtype=np.float64)
    if predictions.ndim != 3 or goals.shape != (predictions.shape[0], predictions.shape[2]):
        raise ShapeError(f"cannot score predictions {predictions.shape} with goals {goals.shape}")
    return np.argmax(np.einsum("naf,nf->na", predictions, goals), axis=1)
