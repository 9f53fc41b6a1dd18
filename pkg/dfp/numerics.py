"""Dense tensors with per-layer reverse-mode gradients, and the Adam optimizer.

Every layer function takes an optional ``Tape``. When a tape is given the
layer records a closure that, on ``Tape.backward``, reads the output's
gradient and accumulates exact gradients into each input tensor that has
``requires_grad`` set. There is no general autodiff graph: the predictor is
a fixed DAG and the tape replays its layers in reverse order.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import InvalidArgument, InvalidState, ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float32
LEAKY_SLOPE = 0.2

ADAM_BETA1 = 0.95
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-4


class Tensor:
    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, *, dtype=DTYPE, requires_grad: bool = True) -> None:
        self.values: np.ndarray = (
            np.asarray(values) if dtype is None else np.asarray(values, dtype=dtype)
        )
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    def accumulate(self, gradient: np.ndarray) -> None:
        if not self.requires_grad:
            return
        gradient = np.asarray(gradient, dtype=self.values.dtype).reshape(self.values.shape)
        if self.grad is None:
            self.grad = gradient.copy()
        else:
            self.grad += gradient

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, dtype={self.values.dtype})"


def constant(values, *, dtype=DTYPE) -> Tensor:
    """Wrap input data that never needs a gradient."""
    return Tensor(values, dtype=dtype, requires_grad=False)


class Tape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self) -> None:
        self._backward: list[Callable[[], None]] = []

    def record(self, backward: Callable[[], None]) -> None:
        self._backward.append(backward)

    def backward(self, output: Tensor) -> None:
        if output.values.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
        output.grad = np.ones_like(output.values)
        for step in reversed(self._backward):
            step()
        self._backward.clear()


def he_init(shape: Sequence[int], fan_in: int, rng: np.random.Generator, *, dtype=DTYPE) -> Tensor:
    if fan_in < 1:
        raise InvalidArgument(f"fan_in must be at least 1, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=tuple(shape)), dtype=dtype)


def zeros(shape: Sequence[int], *, dtype=DTYPE) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), dtype=dtype)


def dense(x: Tensor, weights: Tensor, bias: Tensor, tape: Tape | None = None) -> Tensor:
    if x.values.ndim not in (1, 2):
        raise ShapeError(f"dense input must be rank 1 or 2, got shape {x.shape}")
    if weights.values.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"cannot multiply input {x.shape} by weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match weights {weights.shape}")

    out = Tensor(x.values @ weights.values + bias.values, dtype=None)

    if tape is not None:
        def backward() -> None:
            g = out.grad
            if g is None:
                return
            if x.values.ndim == 1:
                weights.accumulate(np.outer(x.values, g))
                bias.accumulate(g)
            else:
                weights.accumulate(x.values.T @ g)
                bias.accumulate(g.sum(axis=0))
            if x.requires_grad:
                x.accumulate(g @ weights.values.T)

        tape.record(backward)
    return out


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int, tape: Tape | None = None) -> Tensor:
    """Valid cross-correlation over HxWxC (or NxHxWxC) input.

    ``kernels`` has shape (k, k, C_in, C_out); output spatial size is
    ``(in - k) // stride + 1``.
    """
    if stride < 1:
        raise InvalidArgument(f"stride must be positive, got {stride}")
    batched = x.values.ndim == 4
    if x.values.ndim not in (3, 4):
        raise ShapeError(f"conv2d input must be HxWxC or NxHxWxC, got {x.shape}")
    if kernels.values.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"kernels must be (k, k, C_in, C_out), got {kernels.shape}")
    k, _, c_in, c_out = kernels.shape
    x4 = x.values if batched else x.values[None]
    _, height, width, channels = x4.shape
    if channels != c_in:
        raise ShapeError(f"input has {channels} channels, kernels expect {c_in}")
    if k > height or k > width:
        raise ShapeError(f"kernel {k} larger than input {height}x{width}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match {c_out} output channels")

    windows = sliding_window_view(x4, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    # windows: (N, Ho, Wo, C_in, k, k)
    result = np.tensordot(windows, kernels.values, axes=([3, 4, 5], [2, 0, 1])) + bias.values
    out = Tensor(result if batched else result[0], dtype=None)

    if tape is not None:
        out_h, out_w = windows.shape[1], windows.shape[2]

        def backward() -> None:
            g = out.grad
            if g is None:
                return
            g4 = g if batched else g[None]
            kernel_grad = np.tensordot(windows, g4, axes=([0, 1, 2], [0, 1, 2]))
            kernels.accumulate(kernel_grad.transpose(1, 2, 0, 3))
            bias.accumulate(g4.sum(axis=(0, 1, 2)))
            if not x.requires_grad:
                return
            dx = np.zeros_like(x4)
            row_stop = stride * (out_h - 1) + 1
            col_stop = stride * (out_w - 1) + 1
            for i in range(k):
                for j in range(k):
                    dx[:, i:i + row_stop:stride, j:j + col_stop:stride, :] += g4 @ kernels.values[i, j].T
            x.accumulate(dx if batched else dx[0])

        tape.record(backward)
    return out


def leaky_relu(x: Tensor, tape: Tape | None = None, *, slope: float = LEAKY_SLOPE) -> Tensor:
    positive = x.values >= 0
    out = Tensor(np.where(positive, x.values, x.values * slope), dtype=None)

    if tape is not None:
        def backward() -> None:
            if out.grad is None or not x.requires_grad:
                return
            x.accumulate(np.where(positive, out.grad, out.grad * slope))

        tape.record(backward)
    return out


def flatten(x: Tensor, tape: Tape | None = None, *, batched: bool = False) -> Tensor:
    shape = (x.shape[0], -1) if batched else (-1,)
    return reshape(x, shape, tape)


def reshape(x: Tensor, shape: Sequence[int], tape: Tape | None = None) -> Tensor:
    try:
        out = Tensor(x.values.reshape(tuple(shape)), dtype=None)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from exc

    if tape is not None:
        def backward() -> None:
            if out.grad is not None and x.requires_grad:
                x.accumulate(out.grad.reshape(x.values.shape))

        tape.record(backward)
    return out


def concat(tensors: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    """Concatenate along the last axis."""
    if not tensors:
        raise InvalidArgument("concat needs at least one tensor")
    leading = {t.shape[:-1] for t in tensors}
    if len(leading) != 1:
        raise ShapeError(f"leading dimensions differ: {[t.shape for t in tensors]}")
    out = Tensor(np.concatenate([t.values for t in tensors], axis=-1), dtype=None)

    if tape is not None:
        bounds = np.cumsum([0] + [t.shape[-1] for t in tensors])

        def backward() -> None:
            if out.grad is None:
                return
            for tensor, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
                if tensor.requires_grad:
                    tensor.accumulate(out.grad[..., start:stop])

        tape.record(backward)
    return out


def subtract_action_mean(actions: Tensor, tape: Tape | None = None) -> Tensor:
    """Normalization layer: remove the mean over the action axis (-2)."""
    out = Tensor(actions.values - actions.values.mean(axis=-2, keepdims=True), dtype=None)

    if tape is not None:
        def backward() -> None:
            if out.grad is not None and actions.requires_grad:
                g = out.grad
                actions.accumulate(g - g.mean(axis=-2, keepdims=True))

        tape.record(backward)
    return out


def add_expectation(actions: Tensor, expectation: Tensor, tape: Tape | None = None) -> Tensor:
    """Broadcast-add E(j) (..., d) to every action row of (..., w, d)."""
    if actions.shape[:-2] + actions.shape[-1:] != expectation.shape:
        raise ShapeError(f"cannot add expectation {expectation.shape} to actions {actions.shape}")
    out = Tensor(actions.values + expectation.values[..., None, :], dtype=None)

    if tape is not None:
        def backward() -> None:
            g = out.grad
            if g is None:
                return
            actions.accumulate(g)
            expectation.accumulate(g.sum(axis=-2))

        tape.record(backward)
    return out


def take_actions(predictions: Tensor, actions: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Select row ``actions[n]`` from each (w, d) block of an (N, w, d) batch."""
    actions = np.asarray(actions, dtype=np.int64)
    if predictions.values.ndim != 3 or actions.shape != (predictions.shape[0],):
        raise ShapeError(
            f"take_actions needs (N, w, d) predictions and N actions, "
            f"got {predictions.shape} and {actions.shape}"
        )
    rows = np.arange(actions.shape[0])
    out = Tensor(predictions.values[rows, actions], dtype=None)

    if tape is not None:
        def backward() -> None:
            if out.grad is None or not predictions.requires_grad:
                return
            grad = np.zeros_like(predictions.values)
            np.add.at(grad, (rows, actions), out.grad)
            predictions.accumulate(grad)

        tape.record(backward)
    return out


def masked_mse_loss(prediction: Tensor, target, mask, tape: Tape | None = None) -> Tensor:
    """Mean of squared errors over the unmasked components.

    An all-zero mask yields a loss of 0 and a zero gradient.
    """
    target = np.asarray(getattr(target, "values", target), dtype=prediction.values.dtype)
    mask = np.asarray(getattr(mask, "values", mask), dtype=prediction.values.dtype)
    if not (prediction.shape == target.shape == mask.shape):
        raise ShapeError(
            f"prediction {prediction.shape}, target {target.shape} and mask {mask.shape} differ"
        )
    count = float(mask.sum())
    residual = np.where(mask != 0, (prediction.values - target) * mask, 0.0).astype(prediction.values.dtype)
    loss = (residual * residual).sum() / count if count > 0 else 0.0
    out = Tensor(np.asarray(loss), dtype=prediction.values.dtype)

    if tape is not None:
        def backward() -> None:
            if out.grad is None:
                return
            if count > 0:
                prediction.accumulate(out.grad * 2.0 * residual / count)
            else:
                prediction.accumulate(np.zeros_like(prediction.values))

        tape.record(backward)
    return out


class ParameterStore:
    """Named parameters plus Adam moment estimates and the step counter."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._first_moment: dict[str, np.ndarray] = {}
        self._second_moment: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise InvalidArgument(f"parameter {name!r} already exists")
        self._params[name] = tensor
        self._first_moment[name] = np.zeros_like(tensor.values)
        self._second_moment[name] = np.zeros_like(tensor.values)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._first_moment[name], self._second_moment[name]

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def copy(self) -> ParameterStore:
        clone = ParameterStore()
        for name, tensor in self._params.items():
            clone.add(name, Tensor(tensor.values.copy(), dtype=None))
            clone._first_moment[name] = self._first_moment[name].copy()
            clone._second_moment[name] = self._second_moment[name].copy()
        clone.step = self.step
        return clone


def adam_step(
    store: ParameterStore,
    learning_rate: float,
    *,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    epsilon: float = ADAM_EPSILON,
) -> ParameterStore:
    if learning_rate <= 0:
        raise InvalidArgument(f"learning rate must be positive, got {learning_rate}")
    missing = [name for name, tensor in store.items() if tensor.grad is None]
    if missing:
        raise InvalidState(f"no gradient for parameters: {', '.join(missing)}")

    store.step += 1
    t = store.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name, tensor in store.items():
        m, v = store.moments(name)
        g = tensor.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.values -= (learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)).astype(tensor.values.dtype)
        tensor.grad = None
    return store
