"""Experience memory, future-target construction and measurement scaling.

Experiences keep raw measurements. Normalization is applied when targets
are built and when measurements enter the network, so the normalizer can be
recalibrated without touching stored experience.
"""
from __future__ import annotations

import logging
import threading
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .agent import GoalSpec, build_goal_vector
from .exceptions import InvalidArgument, InvalidState
from .numerics import DTYPE

logger = logging.getLogger(__name__)

DEFAULT_OFFSETS = (1, 2, 4, 8, 16, 32)
DEFAULT_CAPACITY = 20_000

# Below this a measurement is treated as constant and left unscaled.
MIN_SCALE = 1e-6


@dataclass(frozen=True, eq=False)
class Experience:
    sensory: np.ndarray
    measurements: np.ndarray
    action: int
    goal: GoalSpec
    episode_id: int
    step: int
    terminal: bool = False


class MeasurementNormalizer:
    def __init__(self, scales: Sequence[float]) -> None:
        scales = np.asarray(scales, dtype=np.float64)
        if scales.ndim != 1 or scales.size == 0:
            raise InvalidArgument("scales must be a non-empty vector")
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise InvalidArgument(f"scales must be finite and positive, got {scales.tolist()}")
        self.scales = scales

    @classmethod
    def identity(cls, n_measurements: int) -> MeasurementNormalizer:
        return cls(np.ones(n_measurements))

    def normalize(self, measurements) -> np.ndarray:
        return np.asarray(measurements, dtype=np.float64) / self.scales

    def denormalize(self, normalized) -> np.ndarray:
        return (np.asarray(normalized, dtype=np.float64) * self.scales).astype(DTYPE)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(s) for s in self.scales)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"MeasurementNormalizer({self.as_tuple()})"


@dataclass
class _EpisodeProgress:
    last_step: int
    terminated: bool
    stored: int


@dataclass
class Minibatch:
    sensory: np.ndarray
    measurements: np.ndarray
    goals: np.ndarray
    actions: np.ndarray
    targets: np.ndarray
    masks: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[tuple[tuple[np.ndarray, np.ndarray, np.ndarray], np.ndarray, np.ndarray]]:
        for i in range(len(self)):
            yield (self.sensory[i], self.measurements[i], self.goals[i]), self.targets[i], self.masks[i]


@lru_cache(maxsize=4096)
def _goal_vector(goal: GoalSpec) -> np.ndarray:
    vector = build_goal_vector(goal)
    vector.setflags(write=False)
    return vector


class ExperienceMemory:
    """FIFO ring buffer of the most recent experiences.

    Appends and samples are serialized by one lock, so actor threads may
    append while a trainer thread samples. An episode is forgotten once
    its last stored experience is evicted; appending to it afterwards only
    works as a fresh episode starting at step 0.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, *, offsets: Sequence[int] = DEFAULT_OFFSETS) -> None:
        if capacity < 1:
            raise InvalidArgument(f"capacity must be positive, got {capacity}")
        _check_offsets(offsets)
        self.capacity = capacity
        self.offsets = tuple(int(o) for o in offsets)
        self.max_offset = max(self.offsets)
        self._slots: list[Experience | None] = [None] * capacity
        self._total = 0
        self._size = 0
        self._by_key: dict[tuple[int, int], int] = {}
        self._episodes: dict[int, _EpisodeProgress] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return self._size

    @property
    def total_appended(self) -> int:
        return self._total

    @property
    def tracked_episodes(self) -> int:
        """Episodes with at least one experience still stored."""
        return len(self._episodes)

    def _insertion_id(self, index: int) -> int:
        if not 0 <= index < self._size:
            raise InvalidArgument(f"index {index} out of range for memory of size {self._size}")
        return self._total - self._size + index

    def __getitem__(self, index: int) -> Experience:
        with self._lock:
            return self._slots[self._insertion_id(index) % self.capacity]

    def find(self, episode_id: int, step: int) -> Experience | None:
        with self._lock:
            insertion = self._by_key.get((episode_id, step))
            return None if insertion is None else self._slots[insertion % self.capacity]

    def append(self, experience: Experience) -> ExperienceMemory:
        with self._lock:
            progress = self._episodes.get(experience.episode_id)
            expected = 0 if progress is None else progress.last_step + 1
            if progress is not None and progress.terminated:
                raise InvalidState(f"episode {experience.episode_id} already terminated")
            if experience.step != expected:
                raise InvalidArgument(
                    f"episode {experience.episode_id} expects step {expected}, got {experience.step}"
                )

            slot = self._total % self.capacity
            if self._size == self.capacity:
                self._evict(self._slots[slot])
            else:
                self._size += 1

            self._slots[slot] = experience
            self._by_key[(experience.episode_id, experience.step)] = self._total
            if progress is None:
                progress = _EpisodeProgress(-1, False, 0)
            # Eviction above may have dropped this episode when it held the evicted slot.
            self._episodes[experience.episode_id] = progress
            progress.last_step = experience.step
            progress.terminated = experience.terminal
            progress.stored += 1
            self._total += 1
        return self

    def _evict(self, old: Experience) -> None:
        del self._by_key[(old.episode_id, old.step)]
        progress = self._episodes[old.episode_id]
        progress.stored -= 1
        if progress.stored == 0:
            del self._episodes[old.episode_id]

    def is_eligible(self, index: int) -> bool:
        """A step is sampleable once its episode ended or ran max_offset past it."""
        with self._lock:
            experience = self[index]
            progress = self._episodes[experience.episode_id]
            return progress.terminated or progress.last_step >= experience.step + self.max_offset

    def eligible_indices(self) -> np.ndarray:
        with self._lock:
            return np.asarray([i for i in range(self._size) if self.is_eligible(i)], dtype=np.int64)


def _check_offsets(offsets: Sequence[int]) -> None:
    if not offsets:
        raise InvalidArgument("at least one temporal offset is required")
    if any(int(o) < 1 for o in offsets) or any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise InvalidArgument(f"offsets must be strictly increasing positive integers, got {offsets}")


def append(memory: ExperienceMemory, experience: Experience) -> ExperienceMemory:
    return memory.append(experience)


def compute_targets(
    memory: ExperienceMemory,
    index: int,
    offsets: Sequence[int] | None = None,
    *,
    normalizer: MeasurementNormalizer | None = None,
    measurement_indices: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Future measurement differences for experience ``index`` and their mask.

    Block i holds normalized(m[t + offsets[i]]) - normalized(m[t]); blocks
    whose step lies past the end of the episode are zero and masked out.
    """
    offsets = memory.offsets if offsets is None else tuple(offsets)
    with memory._lock:
        current = memory[index]
        selection = (
            slice(None) if measurement_indices is None else np.asarray(measurement_indices, dtype=np.int64)
        )

        def scaled(measurements: np.ndarray) -> np.ndarray:
            values = np.asarray(measurements, dtype=np.float64)
            if normalizer is not None:
                values = normalizer.normalize(values)
            return values[selection]

        base = scaled(current.measurements)
        width = base.shape[0]
        targets = np.zeros((len(offsets), width), dtype=np.float64)
        mask = np.zeros((len(offsets), width), dtype=DTYPE)
        for i, offset in enumerate(offsets):
            future = memory.find(current.episode_id, current.step + offset)
            if future is None:
                continue
            targets[i] = scaled(future.measurements) - base
            mask[i] = 1.0
    return targets.ravel().astype(DTYPE), mask.ravel()


def sample_minibatch(
    memory: ExperienceMemory,
    batch_size: int,
    rng: np.random.Generator,
    *,
    normalizer: MeasurementNormalizer | None = None,
    measurement_indices: Sequence[int] | None = None,
) -> Minibatch:
    """Sample uniformly, with replacement, among eligible experiences."""
    if batch_size < 1:
        raise InvalidArgument(f"batch size must be positive, got {batch_size}")
    with memory._lock:
        size = len(memory)
        if size == 0:
            raise InvalidState("cannot sample from an empty experience memory")

        chosen: list[int] = []
        attempts = 0
        while len(chosen) < batch_size and attempts < 64 * batch_size:
            index = int(rng.integers(size))
            attempts += 1
            if memory.is_eligible(index):
                chosen.append(index)
        if len(chosen) < batch_size:
            pool = memory.eligible_indices()
            if pool.size == 0:
                raise InvalidState("no experience in memory is eligible for sampling yet")
            chosen.extend(int(i) for i in pool[rng.integers(pool.size, size=batch_size - len(chosen))])

        experiences = [memory[i] for i in chosen]
        pairs = [
            compute_targets(memory, i, normalizer=normalizer, measurement_indices=measurement_indices)
            for i in chosen
        ]

    return Minibatch(
        sensory=np.stack([e.sensory for e in experiences]),
        measurements=np.stack([np.asarray(e.measurements, dtype=DTYPE) for e in experiences]),
        goals=np.stack([_goal_vector(e.goal) for e in experiences]),
        actions=np.asarray([e.action for e in experiences], dtype=np.int64),
        targets=np.stack([f for f, _ in pairs]),
        masks=np.stack([m for _, m in pairs]),
        indices=np.asarray(chosen, dtype=np.int64),
    )


def calibrate_normalizer(env, steps: int, rng: np.random.Generator, *, min_steps: int = 1000) -> MeasurementNormalizer:
    """Scale each measurement by its standard deviation under a random policy."""
    if steps < min_steps:
        raise InvalidArgument(f"calibration needs at least {min_steps} steps, got {steps}")
    state, observation = env.reset(rng)
    visited = [np.asarray(observation.measurements, dtype=np.float64)]
    for _ in range(steps):
        action = int(rng.integers(env.n_actions))
        state, observation, terminal = env.step(state, action)
        visited.append(np.asarray(observation.measurements, dtype=np.float64))
        if terminal:
            state, observation = env.reset(rng)
            visited.append(np.asarray(observation.measurements, dtype=np.float64))

    scales = np.std(np.stack(visited), axis=0)
    scales = np.where(scales < MIN_SCALE, 1.0, scales)
    logger.info("calibrated measurement scales over %d steps: %s", steps, np.round(scales, 4).tolist())
    return MeasurementNormalizer(scales)
