"""Training loop, evaluation and the training report.

Single-actor mode runs acting and learning in one thread and is
bit-reproducible from the seed. Multi-actor mode runs ``actors`` threads
that share the experience memory and read parameter snapshots the learner
publishes after every update.
"""
from __future__ import annotations

import csv
import itertools
import logging
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agent import (
    BATTLE_WEIGHTS,
    DEFAULT_OFFSET_COEFFS,
    EpsilonSchedule,
    GoalRegime,
    GoalSpec,
    build_goal_vector,
    epsilon_value,
    sample_goal,
    select_action,
    select_actions,
)
from .exceptions import InvalidArgument, InvalidState, TrainingDiverged
from .memory import (
    DEFAULT_CAPACITY,
    DEFAULT_OFFSETS,
    Experience,
    ExperienceMemory,
    MeasurementNormalizer,
    Minibatch,
    calibrate_normalizer,
    sample_minibatch,
)
from .numerics import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, Tape, adam_step, masked_mse_loss, take_actions
from .predictor import PredictorConfig, PredictorNet, build_predictor

logger = logging.getLogger(__name__)

EnvFactory = Callable[[], object]

# Evaluation episodes never share seeds with training episodes.
EVAL_SEED_OFFSET = 10_007
# Evaluation episodes played side by side; one forward pass serves all of them.
EVAL_LOCKSTEP = 16


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2_000_000
    memory_capacity: int = DEFAULT_CAPACITY
    batch_size: int = 64
    update_interval: int = 64
    actors: int = 8
    deterministic: bool = False
    learning_rate: float = 1e-4
    lr_decay: float = 0.3
    lr_milestones: tuple[float, ...] = (0.6, 0.85)
    epsilon_start: float = 1.0
    epsilon_end: float = 0.02
    epsilon_decay_fraction: float = 0.6
    goal_regime: GoalRegime = GoalRegime.FIXED
    # None means (0.5, 0.5, 1) for three measurements and all ones otherwise.
    goal_weights: tuple[float, ...] | None = None
    offset_coeffs: tuple[float, ...] = DEFAULT_OFFSET_COEFFS
    offsets: tuple[int, ...] = DEFAULT_OFFSETS
    # Indices into the measurement vector; None predicts every measurement.
    predicted_measurements: tuple[int, ...] | None = None
    eval_every: int = 100_000
    eval_episodes: int = 20
    eval_goal_weights: tuple[float, ...] | None = None
    calibration_steps: int = 10_000
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_epsilon: float = ADAM_EPSILON
    seed: int = 0

    @property
    def single_actor(self) -> bool:
        return self.deterministic or self.actors == 1

    @property
    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epsilon_decay_fraction)

    def validate(self) -> None:
        positive = {
            "memory_capacity": self.memory_capacity,
            "batch_size": self.batch_size,
            "update_interval": self.update_interval,
            "actors": self.actors,
            "eval_episodes": self.eval_episodes,
        }
        for name, value in positive.items():
            if value < 1:
                raise InvalidArgument(f"{name} must be positive, got {value}")
        if self.total_steps < 0 or self.eval_every < 0 or self.calibration_steps < 0:
            raise InvalidArgument("total_steps, eval_every and calibration_steps must be non-negative")
        if not self.offsets or any(o < 1 for o in self.offsets) or any(
            b <= a for a, b in zip(self.offsets, self.offsets[1:])
        ):
            raise InvalidArgument(f"offsets must be strictly increasing positive integers, got {self.offsets}")
        if len(self.offset_coeffs) != len(self.offsets):
            raise InvalidArgument("offset_coeffs needs one coefficient per offset")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise InvalidArgument("learning_rate must be positive and lr_decay in (0, 1]")
        if any(not 0 <= m <= 1 for m in self.lr_milestones) or list(self.lr_milestones) != sorted(self.lr_milestones):
            raise InvalidArgument(f"lr_milestones must be sorted fractions in [0, 1], got {self.lr_milestones}")
        if not (0 <= self.epsilon_end <= 1 and 0 <= self.epsilon_start <= 1):
            raise InvalidArgument("epsilon endpoints must lie in [0, 1]")
        GoalRegime(self.goal_regime)

    def measurement_indices(self, n_measurements: int) -> tuple[int, ...]:
        if self.predicted_measurements is None:
            return tuple(range(n_measurements))
        indices = tuple(self.predicted_measurements)
        if not indices or len(set(indices)) != len(indices) or any(not 0 <= i < n_measurements for i in indices):
            raise InvalidArgument(
                f"predicted_measurements {indices} must be distinct indices below {n_measurements}"
            )
        return indices

    def base_goal(self, n_predicted: int) -> GoalSpec:
        return GoalSpec(_resolve_weights(self.goal_weights, n_predicted), self.offset_coeffs)

    def eval_goal(self, n_predicted: int) -> GoalSpec:
        weights = self.eval_goal_weights if self.eval_goal_weights is not None else self.goal_weights
        return GoalSpec(_resolve_weights(weights, n_predicted), self.offset_coeffs)


def _resolve_weights(weights: Sequence[float] | None, n_predicted: int) -> tuple[float, ...]:
    if weights is None:
        return BATTLE_WEIGHTS if n_predicted == len(BATTLE_WEIGHTS) else (1.0,) * n_predicted
    if len(weights) != n_predicted:
        raise InvalidArgument(f"goal has {len(weights)} weights but {n_predicted} measurements are predicted")
    return tuple(float(w) for w in weights)


def learning_rate_at(config: TrainConfig, step: int) -> float:
    """Step decay: multiply by ``lr_decay`` at each milestone fraction of training."""
    if config.total_steps == 0:
        return config.learning_rate
    fraction = step / config.total_steps
    passed = sum(1 for milestone in config.lr_milestones if fraction >= milestone)
    return config.learning_rate * config.lr_decay ** passed


@dataclass(frozen=True)
class EvalStats:
    measurement_names: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    episodes: int
    # Agent steps per episode; survival time in the health scenarios.
    mean_length: float = 0.0
    std_length: float = 0.0

    def mean_of(self, name: str) -> float:
        return self.means[self.measurement_names.index(name)]


@dataclass(frozen=True)
class EvaluationPoint:
    step: int
    epsilon: float
    learning_rate: float
    means: tuple[float, ...]
    stds: tuple[float, ...]
    wall_clock: float = field(default=0.0, compare=False)
    steps_per_sec: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    measurement_names: tuple[str, ...]
    measurement_scales: tuple[float, ...] = ()
    updates: int = 0
    experiences: int = 0
    rows: list[EvaluationPoint] = field(default_factory=list)

    def add(self, point: EvaluationPoint) -> None:
        if self.rows and point.step < self.rows[-1].step:
            raise InvalidState(f"report rows must be ordered by step ({point.step} < {self.rows[-1].step})")
        self.rows.append(point)

    def header(self) -> list[str]:
        columns = ["step", "eps", "lr"]
        for name in self.measurement_names:
            columns += [f"mean_{name}", f"std_{name}"]
        return columns

    def csv_rows(self) -> list[list[str]]:
        lines = []
        for row in self.rows:
            line = [str(row.step), repr(float(row.epsilon)), repr(float(row.learning_rate))]
            for mean, std in zip(row.means, row.stds):
                line += [repr(float(mean)), repr(float(std))]
            lines.append(line)
        return lines

    def write_csv(self, path: str | Path) -> Path:
        """Write the deterministic report; timing goes to :meth:`write_timing_csv`."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.csv_rows())
        return path

    def write_timing_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["step", "wall_clock", "steps_per_sec"])
            for row in self.rows:
                writer.writerow([row.step, f"{row.wall_clock:.3f}", f"{row.steps_per_sec:.1f}"])
        return path


# evaluation


@dataclass
class _Episode:
    index: int
    state: object
    observation: object
    rng: np.random.Generator


@dataclass(frozen=True)
class EpisodeBatch:
    """Outcome of a group of evaluation episodes."""

    finals: list[np.ndarray]
    lengths: list[int]
    seconds: float

    @property
    def steps(self) -> int:
        return sum(self.lengths)

    @property
    def steps_per_sec(self) -> float:
        return self.steps / self.seconds if self.seconds > 0 else 0.0


ChooseActions = Callable[[list, list], Sequence[int]]


def play_episodes(
    env, episodes: int, seed: int, choose: ChooseActions, *, lockstep: int = EVAL_LOCKSTEP
) -> EpisodeBatch:
    """Play ``episodes`` episodes with up to ``lockstep`` of them running side by side.

    ``choose(observations, rngs)`` returns one action per running episode.
    Episode ``e`` resets from the seed ``[seed, 0, e]`` and draws its actions
    from ``[seed, 1, e]``, so every policy faces the same starting states.
    """
    if episodes < 1:
        raise InvalidArgument(f"evaluation needs at least one episode, got {episodes}")
    if lockstep < 1:
        raise InvalidArgument(f"lockstep must be positive, got {lockstep}")
    finals: list[np.ndarray | None] = [None] * episodes
    lengths = [0] * episodes
    pending = iter(range(episodes))

    def start(index: int) -> _Episode:
        state, observation = env.reset(np.random.default_rng([seed, 0, index]))
        return _Episode(index, state, observation, np.random.default_rng([seed, 1, index]))

    started = time.perf_counter()
    running = [start(index) for index in itertools.islice(pending, lockstep)]
    while running:
        actions = choose([e.observation for e in running], [e.rng for e in running])
        still_running = []
        for episode, action in zip(running, actions):
            episode.state, episode.observation, terminal = env.step(episode.state, int(action))
            lengths[episode.index] += 1
            if not terminal:
                still_running.append(episode)
                continue
            finals[episode.index] = np.asarray(episode.observation.measurements, dtype=np.float64)
            following = next(pending, None)
            if following is not None:
                still_running.append(start(following))
        running = still_running
    return EpisodeBatch(finals, lengths, time.perf_counter() - started)


def _summarize(env, played: EpisodeBatch) -> EvalStats:
    stacked = np.stack(played.finals)
    lengths = np.asarray(played.lengths, dtype=np.float64)
    return EvalStats(
        measurement_names=tuple(env.measurement_names),
        means=tuple(float(v) for v in stacked.mean(axis=0)),
        stds=tuple(float(v) for v in stacked.std(axis=0)),
        episodes=len(played.finals),
        mean_length=float(lengths.mean()),
        std_length=float(lengths.std()),
    )


def greedy_chooser(net: PredictorNet, goal: GoalSpec, *, epsilon: float = 0.0) -> ChooseActions:
    goal_vector = build_goal_vector(
        goal, n_measurements=net.config.predicted_count, n_offsets=net.config.n_offsets
    )

    def choose(observations, rngs):
        goals = np.broadcast_to(goal_vector, (len(observations), goal_vector.size))
        return select_actions(net, observations, goals, epsilon, rngs)

    return choose


def evaluate(
    net: PredictorNet,
    env_factory: EnvFactory,
    goal: GoalSpec,
    episodes: int,
    seed: int,
    *,
    epsilon: float = 0.0,
    lockstep: int = EVAL_LOCKSTEP,
) -> EvalStats:
    """Mean and standard deviation of each measurement at episode end under the greedy policy."""
    env = env_factory()
    played = play_episodes(env, episodes, seed, greedy_chooser(net, goal, epsilon=epsilon), lockstep=lockstep)
    logger.debug("evaluated %d episodes, %d steps at %.0f steps/s", episodes, played.steps, played.steps_per_sec)
    return _summarize(env, played)


def evaluate_random_policy(env_factory: EnvFactory, episodes: int, seed: int) -> EvalStats:
    """Baseline: uniformly random actions, with the same episode seeds as :func:`evaluate`."""
    env = env_factory()

    def choose(observations, rngs):
        return [int(rng.integers(env.n_actions)) for rng in rngs]

    return _summarize(env, play_episodes(env, episodes, seed, choose))


def measure_throughput(
    net: PredictorNet,
    env_factory: EnvFactory,
    goal: GoalSpec,
    episodes: int,
    seed: int = 0,
    *,
    lockstep: int = EVAL_LOCKSTEP,
) -> EpisodeBatch:
    """Time greedy acting: environment steps plus action selection, no learning."""
    played = play_episodes(env_factory(), episodes, seed, greedy_chooser(net, goal), lockstep=lockstep)
    logger.info(
        "greedy acting: %d steps in %.2fs, %.0f steps/s (%d episodes side by side)",
        played.steps,
        played.seconds,
        played.steps_per_sec,
        lockstep,
    )
    return played


# training


def fit_predictor_config(predictor_config: PredictorConfig, env, config: TrainConfig) -> PredictorConfig:
    """Adopt the environment's observation, action and measurement sizes."""
    indices = config.measurement_indices(env.n_measurements)
    return replace(
        predictor_config,
        image_shape=tuple(env.observation_shape),
        n_measurements=env.n_measurements,
        n_actions=env.n_actions,
        n_offsets=len(config.offsets),
        n_predicted=None if len(indices) == env.n_measurements else len(indices),
    )


def _resolve_normalizer(
    predictor_config: PredictorConfig, env, config: TrainConfig, rng: np.random.Generator
) -> MeasurementNormalizer:
    if predictor_config.measurement_scales is not None:
        return MeasurementNormalizer(predictor_config.measurement_scales)
    if config.calibration_steps > 0:
        return calibrate_normalizer(env, config.calibration_steps, rng, min_steps=min(1000, config.calibration_steps))
    return MeasurementNormalizer.identity(env.n_measurements)


def update_predictor(net: PredictorNet, batch: Minibatch, learning_rate: float, config: TrainConfig, *, step: int = 0) -> float:
    """One Adam step on the masked regression loss of ``batch``; returns the loss."""
    tape = Tape()
    net.store.zero_grad()
    predictions = net.forward_batch(batch.sensory, batch.measurements, batch.goals, tape)
    chosen = take_actions(predictions, batch.actions, tape)
    loss = masked_mse_loss(chosen, batch.targets, batch.masks, tape)
    value = float(loss.values)
    if not np.isfinite(value):
        raise TrainingDiverged("training loss is not finite", step=step, loss=value)
    tape.backward(loss)
    adam_step(
        net.store,
        learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        epsilon=config.adam_epsilon,
    )
    return value


class _Learner:
    """Owns the trainable net, the memory and the report for one run."""

    def __init__(self, net, memory, normalizer, indices, config, report, progress, eval_factory):
        self.net = net
        self.memory = memory
        self.normalizer = normalizer
        self.indices = indices
        self.config = config
        self.report = report
        self.progress = progress
        self.eval_factory = eval_factory
        self.sample_rng = np.random.default_rng([config.seed, 2])
        self.started = time.perf_counter()
        self.next_update = config.update_interval
        # total_appended when sampling last found nothing eligible
        self.blocked_at: int | None = None

    def update_due(self) -> bool:
        appended = self.memory.total_appended
        return appended >= self.next_update and (self.blocked_at is None or appended > self.blocked_at)

    def maybe_update(self, agent_step: int) -> bool:
        """Run every update owed for the experiences appended so far.

        An update that finds nothing eligible stays owed and runs once later
        experiences make a sample possible.
        """
        updated = False
        while self.update_due():
            try:
                batch = sample_minibatch(
                    self.memory,
                    self.config.batch_size,
                    self.sample_rng,
                    normalizer=self.normalizer,
                    measurement_indices=self.indices,
                )
            except InvalidState:
                if self.blocked_at is None:
                    logger.info("update at step %d deferred: no eligible experience yet", agent_step)
                self.blocked_at = self.memory.total_appended
                break
            self.blocked_at = None
            self.next_update += self.config.update_interval
            lr = learning_rate_at(self.config, agent_step)
            loss = update_predictor(self.net, batch, lr, self.config, step=agent_step)
            self.report.updates += 1
            logger.debug("update %d at step %d: loss %.6f lr %.2e", self.report.updates, agent_step, loss, lr)
            updated = True
        return updated

    def evaluate_at(self, agent_step: int) -> EvaluationPoint:
        config = self.config
        stats = evaluate(
            self.net,
            self.eval_factory,
            config.eval_goal(len(self.indices)),
            config.eval_episodes,
            seed=config.seed + EVAL_SEED_OFFSET,
        )
        elapsed = time.perf_counter() - self.started
        point = EvaluationPoint(
            step=agent_step,
            epsilon=epsilon_value(config.epsilon_schedule, agent_step, config.total_steps),
            learning_rate=learning_rate_at(config, agent_step),
            means=stats.means,
            stds=stats.stds,
            wall_clock=elapsed,
            steps_per_sec=agent_step / elapsed if elapsed > 0 else 0.0,
        )
        self.report.add(point)
        logger.info(
            "step %d eps %.3f lr %.2e %s (%.0f steps/s)",
            point.step,
            point.epsilon,
            point.learning_rate,
            " ".join(f"{n}={m:.2f}" for n, m in zip(stats.measurement_names, stats.means)),
            point.steps_per_sec,
        )
        if self.progress is not None:
            self.progress(point)
        return point


class _Actor:
    def __init__(self, env, actor_index: int, n_actors: int, config: TrainConfig, n_predicted: int) -> None:
        self.env = env
        self.actor_index = actor_index
        self.n_actors = n_actors
        self.config = config
        self.base_goal = config.base_goal(n_predicted)
        seed = config.seed + actor_index
        self.env_rng = np.random.default_rng([seed, 0])
        self.action_rng = np.random.default_rng([seed, 3])
        self.goal_rng = np.random.default_rng([seed, 4])
        self.episodes = 0
        self._start_episode()

    def _start_episode(self) -> None:
        self.episode_id = self.actor_index + self.n_actors * self.episodes
        self.episodes += 1
        self.t = 0
        self.state, self.observation = self.env.reset(self.env_rng)
        self.goal = sample_goal(self.config.goal_regime, self.base_goal, self.goal_rng)
        self.goal_vector = build_goal_vector(self.goal)

    def act(self, net: PredictorNet, memory: ExperienceMemory, agent_step: int) -> None:
        """Take one step and store the resulting experience(s)."""
        epsilon = epsilon_value(self.config.epsilon_schedule, agent_step, self.config.total_steps)
        observation = self.observation
        action = select_action(net, observation, self.goal_vector, epsilon, self.action_rng)
        memory.append(
            Experience(observation.sensory, observation.measurements, action, self.goal, self.episode_id, self.t)
        )
        self.state, self.observation, terminal = self.env.step(self.state, action)
        self.t += 1
        if terminal:
            memory.append(
                Experience(
                    self.observation.sensory,
                    self.observation.measurements,
                    0,
                    self.goal,
                    self.episode_id,
                    self.t,
                    terminal=True,
                )
            )
            self._start_episode()


def train(
    env_factory: EnvFactory,
    predictor_config: PredictorConfig,
    config: TrainConfig,
    *,
    progress: Callable[[EvaluationPoint], None] | None = None,
) -> tuple[PredictorNet, TrainReport]:
    config.validate()
    env = env_factory()
    indices = config.measurement_indices(env.n_measurements)
    predictor_config = fit_predictor_config(predictor_config, env, config)
    normalizer = _resolve_normalizer(predictor_config, env, config, np.random.default_rng([config.seed, 5]))
    predictor_config = replace(predictor_config, measurement_scales=normalizer.as_tuple())
    net = build_predictor(predictor_config, np.random.default_rng([config.seed, 1]))

    report = TrainReport(
        measurement_names=tuple(env.measurement_names),
        measurement_scales=normalizer.as_tuple(),
    )
    if config.total_steps == 0:
        return net, report

    memory = ExperienceMemory(config.memory_capacity, offsets=config.offsets)
    learner = _Learner(net, memory, normalizer, indices, config, report, progress, env_factory)
    logger.info(
        "training %d steps with %s, %d parameter tensors, scales %s",
        config.total_steps,
        "one actor" if config.single_actor else f"{config.actors} actors",
        len(net.store),
        np.round(normalizer.scales, 4).tolist(),
    )
    if config.single_actor:
        _train_single(env, learner, len(indices))
    else:
        _train_threaded(env, env_factory, learner, len(indices))
    report.experiences = memory.total_appended
    return net, report


def _train_single(env, learner: _Learner, n_predicted: int) -> None:
    config = learner.config
    actor = _Actor(env, 0, 1, config, n_predicted)
    for step in range(config.total_steps):
        actor.act(learner.net, learner.memory, step)
        learner.maybe_update(step + 1)
        if config.eval_every and (step + 1) % config.eval_every == 0:
            learner.evaluate_at(step + 1)
    if not learner.report.rows or learner.report.rows[-1].step != config.total_steps:
        learner.evaluate_at(config.total_steps)


class _SharedProgress:
    def __init__(self, snapshot: PredictorNet) -> None:
        self.condition = threading.Condition()
        self.snapshot = snapshot
        self.steps = 0
        self.finished = 0
        self.errors: list[BaseException] = []


def _train_threaded(env, env_factory: EnvFactory, learner: _Learner, n_predicted: int) -> None:
    config = learner.config
    shared = _SharedProgress(learner.net.copy())
    envs = [env] + [env_factory() for _ in range(config.actors - 1)]

    def run_actor(index: int) -> None:
        try:
            actor = _Actor(envs[index], index, config.actors, config, n_predicted)
            while True:
                with shared.condition:
                    if shared.errors or shared.steps >= config.total_steps:
                        break
                    agent_step = shared.steps
                    shared.steps += 1
                    net = shared.snapshot
                actor.act(net, learner.memory, agent_step)
                with shared.condition:
                    shared.condition.notify_all()
        except BaseException as exc:  # re-raised by the learner thread
            with shared.condition:
                shared.errors.append(exc)
        finally:
            with shared.condition:
                shared.finished += 1
                shared.condition.notify_all()

    threads = [
        threading.Thread(target=run_actor, args=(index,), name=f"dfp-actor-{index}", daemon=True)
        for index in range(config.actors)
    ]
    for thread in threads:
        thread.start()

    next_eval = config.eval_every or None
    try:
        while True:
            with shared.condition:
                shared.condition.wait_for(
                    lambda: shared.errors
                    or shared.finished == config.actors
                    or learner.update_due()
                )
                if shared.errors:
                    raise shared.errors[0]
                done = shared.finished == config.actors
                agent_step = shared.steps
            if learner.maybe_update(agent_step):
                snapshot = learner.net.copy()
                with shared.condition:
                    shared.snapshot = snapshot
            if next_eval is not None and agent_step >= next_eval and not done:
                learner.evaluate_at(agent_step)
                next_eval += config.eval_every
            if done:
                break
    except BaseException:
        with shared.condition:
            shared.errors.append(InvalidState("learner stopped"))
            shared.condition.notify_all()
        raise
    finally:
        for thread in threads:
            thread.join()

    learner.evaluate_at(config.total_steps)
