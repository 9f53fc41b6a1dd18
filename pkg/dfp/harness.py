"""Experiment runs: single trainings, evaluations and the canned result tables.

Every run writes into its output directory:

    config.txt          resolved configuration snapshot (key=value)
    report.csv          training report (step, eps, lr, mean_/std_ per measurement)
    timing.csv          wall clock and steps/sec per evaluation point
    <table>.csv         result tables, one row per cell
    checkpoints/*.dfp   trained predictors (with .cfg headers)
"""
from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from .agent import BATTLE_WEIGHTS, GoalRegime, GoalSpec
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    dataclass_from_config,
    dataclass_to_config,
    dfp_setting,
    dump_config,
    parse_config,
    split_prefixed,
)
from .envs import GridWorld, GridWorldConfig, scenario_config
from .exceptions import ConfigError, InvalidArgument
from .memory import calibrate_normalizer
from .predictor import PredictorConfig, preset_config
from .trainer import (
    EVAL_SEED_OFFSET,
    EvalStats,
    EvaluationPoint,
    TrainConfig,
    evaluate,
    evaluate_random_policy,
    train,
)

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("train", "evaluate", "ablation-table", "goal-matrix", "env-matrix", "calibrate")

GOAL_MATRIX_TEST_GOALS = (
    (0.5, 0.5, 1.0),
    (0.0, 0.0, 1.0),
    (1.0, 1.0, -1.0),
    (-1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
)
GOAL_MATRIX_REGIMES = (GoalRegime.FIXED, GoalRegime.UNIFORM01, GoalRegime.UNIFORM_SYM)

ENV_MATRIX_TRAIN_SETTINGS = ("G3", "G4", "G3-tx", "G4-tx", "G4-tx-L")
ENV_MATRIX_TEST_SETTINGS = ("G3", "G4", "G3-tx", "G4-tx")

FRAGS = "frags"


@dataclass(frozen=True)
class AblationVariant:
    name: str
    group: str
    predicted_measurements: tuple[int, ...] | None = None
    offsets: tuple[int, ...] | None = None
    offset_coeffs: tuple[float, ...] | None = None
    predictor_overrides: Mapping[str, object] = field(default_factory=dict)


ABLATION_VARIANTS = (
    AblationVariant("all-measurements/all-offsets", "targets"),
    AblationVariant("all-measurements/one-offset", "targets", offsets=(32,), offset_coeffs=(1.0,)),
    AblationVariant("frags-only/all-offsets", "targets", predicted_measurements=(2,)),
    AblationVariant(
        "frags-only/one-offset", "targets", predicted_measurements=(2,), offsets=(32,), offset_coeffs=(1.0,)
    ),
    AblationVariant("full", "architecture"),
    AblationVariant("no-normalization", "architecture", predictor_overrides={"disable_normalization": True}),
    AblationVariant("no-split", "architecture", predictor_overrides={"disable_split": True}),
    AblationVariant(
        "no-input-measurements", "architecture", predictor_overrides={"disable_input_measurements": True}
    ),
)


class RunRecorder:
    """Hooks called as a run progresses; the default records nothing."""

    def start(self, spec: ExperimentSpec) -> None:
        pass

    def evaluation_point(self, point: EvaluationPoint) -> None:
        pass

    def result_row(self, table: str, row: Mapping[str, object]) -> None:
        pass

    def finish(self, status: str) -> None:
        pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "train"
    scenario: str = "G1"
    preset: str = "desk"
    seed: int = 0
    output_dir: str = "runs/default"
    eval_episodes: int = 200
    seeds_per_cell: int = 3
    goal: tuple[float, ...] | None = None
    checkpoint: str | None = None
    train_overrides: Mapping[str, object] = field(default_factory=dict)
    predictor_overrides: Mapping[str, object] = field(default_factory=dict)
    env_overrides: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise InvalidArgument(f"unknown experiment kind {self.kind!r}; choose from {', '.join(EXPERIMENT_KINDS)}")
        if self.eval_episodes < 1 or self.seeds_per_cell < 1:
            raise InvalidArgument("eval_episodes and seeds_per_cell must be positive")

    @classmethod
    def with_defaults(cls, **values) -> ExperimentSpec:
        """Fill unset fields from the project's DFP settings."""
        values.setdefault("scenario", dfp_setting("DEFAULT_SCENARIO"))
        values.setdefault("preset", dfp_setting("DEFAULT_PRESET"))
        values.setdefault("seed", dfp_setting("DEFAULT_SEED"))
        values.setdefault("eval_episodes", dfp_setting("EVAL_EPISODES"))
        values.setdefault("seeds_per_cell", dfp_setting("SEEDS_PER_CELL"))
        values.setdefault("output_dir", str(Path(dfp_setting("OUTPUT_ROOT")) / values.get("kind", "train")))
        return cls(**values)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.seed + offset for offset in range(self.seeds_per_cell))

    def train_config(self, **overrides) -> TrainConfig:
        base = TrainConfig(seed=self.seed)
        config = dataclass_from_config(TrainConfig, dict(self.train_overrides), base=base)
        if self.goal is not None:
            config = replace(config, goal_weights=tuple(self.goal))
        return replace(config, **overrides)

    def predictor_config(self, preset: str | None = None, **overrides) -> PredictorConfig:
        config = preset_config(preset or self.preset)
        config = dataclass_from_config(PredictorConfig, dict(self.predictor_overrides), base=config)
        return replace(config, **overrides)

    def env_config(self, setting: str | None = None, **overrides) -> GridWorldConfig:
        config = scenario_config(setting or self.scenario)
        config = dataclass_from_config(GridWorldConfig, dict(self.env_overrides), base=config)
        return replace(config, **overrides)

    def env_factory(self, setting: str | None = None, **overrides) -> Callable[[], GridWorld]:
        return partial(GridWorld, self.env_config(setting, **overrides))

    def snapshot(self) -> dict[str, object]:
        mapping: dict[str, object] = {
            "kind": self.kind,
            "scenario": self.scenario,
            "preset": self.preset,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "eval_episodes": self.eval_episodes,
            "seeds_per_cell": self.seeds_per_cell,
            "goal": self.goal,
            "checkpoint": self.checkpoint,
        }
        train = dataclass_to_config(self.train_config(), prefix="train.")
        # The seed lives at the top level so --seed can override a loaded snapshot.
        train.pop("train.seed")
        mapping.update(train)
        # Tables switch presets and scenarios per cell, so only explicit
        # predictor and env overrides are recorded; checkpoints carry the
        # resolved predictor config.
        mapping.update({f"predictor.{key}": value for key, value in self.predictor_overrides.items()})
        mapping.update({f"env.{key}": value for key, value in self.env_overrides.items()})
        return mapping

    @classmethod
    def from_config(cls, mapping: Mapping[str, str], **overrides) -> ExperimentSpec:
        """Rebuild a spec from a ``config.txt`` snapshot or a ``--config`` file."""
        top = {key: value for key, value in mapping.items() if "." not in key}
        unknown = sorted(
            key for key in mapping if "." in key and key.split(".", 1)[0] not in ("train", "predictor", "env")
        )
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        spec = dataclass_from_config(
            cls,
            {key: value for key, value in top.items() if key not in ("train_overrides", "predictor_overrides", "env_overrides")},
        )
        spec = replace(
            spec,
            train_overrides=split_prefixed(mapping, "train."),
            predictor_overrides=split_prefixed(mapping, "predictor."),
            env_overrides=split_prefixed(mapping, "env."),
        )
        # Validates every section eagerly.
        spec.train_config()
        spec.predictor_config()
        spec.env_config()
        return replace(spec, **overrides)

    def write_snapshot(self) -> Path:
        path = self.output_path / "config.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_config(self.snapshot()), encoding="utf-8")
        return path


def load_spec(path: str | Path, **overrides) -> ExperimentSpec:
    return ExperimentSpec.from_config(parse_config(Path(path).read_text(encoding="utf-8")), **overrides)


class ResultTable:
    """Rows of one result table, written as a CSV with a fixed header."""

    def __init__(self, name: str, columns: Sequence[str]) -> None:
        self.name = name
        self.columns = tuple(columns)
        self.rows: list[dict[str, object]] = []

    def add(self, **row) -> dict[str, object]:
        if set(row) != set(self.columns):
            raise InvalidArgument(f"{self.name} rows need columns {self.columns}, got {tuple(row)}")
        self.rows.append(row)
        return row

    def column(self, name: str) -> list[object]:
        return [row[name] for row in self.rows]

    def lookup(self, **criteria) -> dict[str, object]:
        for row in self.rows:
            if all(row[key] == value for key, value in criteria.items()):
                return row
        raise KeyError(criteria)

    def write_csv(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=self.columns, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({key: _cell(value) for key, value in row.items()})
        return path


def _cell(value) -> object:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ";".join(str(v) for v in value)
    return value


def _recorder(recorder: RunRecorder | None) -> RunRecorder:
    return recorder if recorder is not None else RunRecorder()


class _Session:
    """Context manager that brackets a run with recorder start/finish calls."""

    def __init__(self, spec: ExperimentSpec, recorder: RunRecorder | None) -> None:
        self.spec = spec
        self.recorder = _recorder(recorder)

    def __enter__(self) -> RunRecorder:
        self.spec.write_snapshot()
        self.recorder.start(self.spec)
        logger.info("%s run in %s (scenario %s, preset %s, seed %d)",
                    self.spec.kind, self.spec.output_dir, self.spec.scenario, self.spec.preset, self.spec.seed)
        return self.recorder

    def __exit__(self, exc_type, exc, tb) -> None:
        self.recorder.finish("failed" if exc_type else "finished")
        if exc_type:
            logger.error("%s run in %s failed: %s", self.spec.kind, self.spec.output_dir, exc)


def _publish(table: ResultTable, spec: ExperimentSpec, recorder: RunRecorder) -> ResultTable:
    path = table.write_csv(spec.output_path)
    for row in table.rows:
        recorder.result_row(table.name, row)
    logger.info("wrote %s (%d rows)", path, len(table.rows))
    return table


def _progress(recorder: RunRecorder, progress: Callable[[EvaluationPoint], None] | None):
    def report(point: EvaluationPoint) -> None:
        recorder.evaluation_point(point)
        if progress is not None:
            progress(point)

    return report


def run_train(
    spec: ExperimentSpec,
    *,
    recorder: RunRecorder | None = None,
    progress: Callable[[EvaluationPoint], None] | None = None,
):
    with _Session(spec, recorder) as rec:
        net, report = train(
            spec.env_factory(),
            spec.predictor_config(),
            spec.train_config(),
            progress=_progress(rec, progress),
        )
        report.write_csv(spec.output_path / "report.csv")
        report.write_timing_csv(spec.output_path / "timing.csv")
        save_checkpoint(net, spec.output_path / "checkpoints" / "final.dfp")
    return net, report


def checkpoint_path(spec: ExperimentSpec) -> Path:
    if spec.checkpoint:
        return Path(spec.checkpoint)
    return spec.output_path / "checkpoints" / "final.dfp"


def run_evaluate(spec: ExperimentSpec, *, recorder: RunRecorder | None = None) -> ResultTable:
    """Evaluate a saved predictor and the random policy on the same episode seeds."""
    net = load_checkpoint(checkpoint_path(spec))
    env_factory = spec.env_factory()
    env = env_factory()
    train_config = spec.train_config()
    n_predicted = net.config.predicted_count
    goal = train_config.eval_goal(n_predicted)
    names = tuple(env.measurement_names)
    table = ResultTable("evaluation", ("policy", "goal", "episodes", *_stat_columns(names)))

    with _Session(spec, recorder) as rec:
        stats = evaluate(net, env_factory, goal, spec.eval_episodes, seed=spec.seed + EVAL_SEED_OFFSET)
        table.add(policy="dfp", goal=goal.weights, episodes=stats.episodes, **_stat_values(stats))
        baseline = evaluate_random_policy(env_factory, spec.eval_episodes, seed=spec.seed + EVAL_SEED_OFFSET)
        table.add(policy="random", goal=goal.weights, episodes=baseline.episodes, **_stat_values(baseline))
        _publish(table, spec, rec)
    return table


def run_calibrate(spec: ExperimentSpec, *, recorder: RunRecorder | None = None) -> ResultTable:
    """Measurement scales and random-policy terminal statistics for a scenario."""
    env_factory = spec.env_factory()
    env = env_factory()
    steps = spec.train_config().calibration_steps or 10_000
    names = tuple(env.measurement_names)
    table = ResultTable("calibration", ("measurement", "scale", "random_mean", "random_std", "episodes"))

    with _Session(spec, recorder) as rec:
        normalizer = calibrate_normalizer(env, steps, np.random.default_rng([spec.seed, 5]), min_steps=min(1000, steps))
        baseline = evaluate_random_policy(env_factory, spec.eval_episodes, seed=spec.seed + EVAL_SEED_OFFSET)
        for index, name in enumerate(names):
            table.add(
                measurement=name,
                scale=float(normalizer.scales[index]),
                random_mean=baseline.means[index],
                random_std=baseline.stds[index],
                episodes=baseline.episodes,
            )
        _publish(table, spec, rec)
    return table


def _stat_columns(names: Sequence[str]) -> list[str]:
    columns = []
    for name in names:
        columns += [f"mean_{name}", f"std_{name}"]
    return columns + ["mean_length", "std_length"]


def _stat_values(stats: EvalStats) -> dict[str, float]:
    values = {}
    for name, mean, std in zip(stats.measurement_names, stats.means, stats.stds):
        values[f"mean_{name}"] = mean
        values[f"std_{name}"] = std
    values["mean_length"] = stats.mean_length
    values["std_length"] = stats.std_length
    return values


def _require_battle(spec: ExperimentSpec, table: str) -> None:
    if not spec.env_config().battle:
        raise InvalidArgument(f"{table} needs a battle scenario (G3 or G4), got {spec.scenario}")


def _require_randomized_battle(spec: ExperimentSpec, table: str) -> None:
    _require_battle(spec, table)
    if spec.env_config().palette_set != "train":
        raise InvalidArgument(
            f"{table} needs a palette-randomized battle scenario (G3-tx or G4-tx), got {spec.scenario}"
        )


def _train_and_save(
    spec: ExperimentSpec,
    label: str,
    seed: int,
    *,
    env_setting: str | None = None,
    preset: str | None = None,
    predictor_overrides: Mapping[str, object] | None = None,
    train_overrides: Mapping[str, object] | None = None,
):
    train_config = spec.train_config(seed=seed, **dict(train_overrides or {}))
    env_factory = spec.env_factory(env_setting)
    predictor_config = spec.predictor_config(preset, **dict(predictor_overrides or {}))
    logger.info("training %s (seed %d)", label, seed)
    net, report = train(env_factory, predictor_config, train_config)
    slug = label.replace("/", "_")
    save_checkpoint(net, spec.output_path / "checkpoints" / f"{slug}_s{seed}.dfp")
    report.write_csv(spec.output_path / "reports" / f"{slug}_s{seed}.csv")
    return net, train_config


def run_ablation_table(spec: ExperimentSpec, *, recorder: RunRecorder | None = None) -> ResultTable:
    """Measurement/offset variants and architecture variants, mean terminal frags per variant."""
    _require_randomized_battle(spec, "the ablation table")
    table = ResultTable("ablation", ("variant", "group", "seeds", "mean_frags", "seed_frags"))

    with _Session(spec, recorder) as rec:
        per_variant: dict[str, list[float]] = {}
        shared: dict[int, float] = {}
        for variant in ABLATION_VARIANTS:
            scores = []
            for seed in spec.seeds:
                # "full" is the same model as all-measurements/all-offsets.
                if variant.name == "full" and seed in shared:
                    scores.append(shared[seed])
                    continue
                overrides: dict[str, object] = {}
                if variant.predicted_measurements is not None:
                    overrides["predicted_measurements"] = variant.predicted_measurements
                    overrides["goal_weights"] = (1.0,) * len(variant.predicted_measurements)
                    overrides["eval_goal_weights"] = None
                if variant.offsets is not None:
                    overrides["offsets"] = variant.offsets
                    overrides["offset_coeffs"] = variant.offset_coeffs
                net, train_config = _train_and_save(
                    spec,
                    f"ablation-{variant.name}",
                    seed,
                    predictor_overrides=variant.predictor_overrides,
                    train_overrides=overrides,
                )
                stats = evaluate(
                    net,
                    spec.env_factory(),
                    train_config.eval_goal(net.config.predicted_count),
                    spec.eval_episodes,
                    seed=seed + EVAL_SEED_OFFSET,
                )
                scores.append(stats.mean_of(FRAGS))
                if variant.name == ABLATION_VARIANTS[0].name:
                    shared[seed] = scores[-1]
            per_variant[variant.name] = scores
            table.add(
                variant=variant.name,
                group=variant.group,
                seeds=len(scores),
                mean_frags=float(np.mean(scores)),
                seed_frags=tuple(round(s, 4) for s in scores),
            )
        _publish(table, spec, rec)
    return table


def run_goal_matrix(spec: ExperimentSpec, *, recorder: RunRecorder | None = None) -> ResultTable:
    """Three training regimes, each evaluated under the five test goals."""
    _require_battle(spec, "the goal matrix")
    table = ResultTable(
        "goal_matrix", ("train_regime", "test_goal", "seeds", "mean_ammo", "mean_health", "mean_frags")
    )

    with _Session(spec, recorder) as rec:
        for regime in GOAL_MATRIX_REGIMES:
            results = {goal: [] for goal in GOAL_MATRIX_TEST_GOALS}
            for seed in spec.seeds:
                net, train_config = _train_and_save(
                    spec,
                    f"goal-{regime.value}",
                    seed,
                    train_overrides={"goal_regime": regime, "goal_weights": BATTLE_WEIGHTS},
                )
                for goal in GOAL_MATRIX_TEST_GOALS:
                    stats = evaluate(
                        net,
                        spec.env_factory(),
                        GoalSpec(goal, train_config.offset_coeffs),
                        spec.eval_episodes,
                        seed=seed + EVAL_SEED_OFFSET,
                    )
                    results[goal].append(stats.means)
            for goal in GOAL_MATRIX_TEST_GOALS:
                ammo, health, frags = np.mean(np.asarray(results[goal]), axis=0)
                table.add(
                    train_regime=regime.value,
                    test_goal=goal,
                    seeds=len(results[goal]),
                    mean_ammo=float(ammo),
                    mean_health=float(health),
                    mean_frags=float(frags),
                )
        _publish(table, spec, rec)
    return table


def parse_setting(setting: str) -> tuple[str, str | None]:
    """Split a setting label into (scenario, preset); ``-L`` selects desk-large."""
    if setting.endswith("-L"):
        return setting[:-2], "desk-large"
    return setting, None


def held_out_overrides(setting: str) -> dict[str, object]:
    """Randomized test settings draw from the held-out palettes."""
    return {"palette_set": "test"} if setting.endswith("-tx") else {}


def run_env_matrix(spec: ExperimentSpec, *, recorder: RunRecorder | None = None) -> ResultTable:
    """Train on each of five settings, test on four, mean terminal frags per cell."""
    table = ResultTable("env_matrix", ("train_setting", "test_setting", "seeds", "mean_frags"))

    with _Session(spec, recorder) as rec:
        for train_setting in ENV_MATRIX_TRAIN_SETTINGS:
            scenario, preset = parse_setting(train_setting)
            scores = {test: [] for test in ENV_MATRIX_TEST_SETTINGS}
            for seed in spec.seeds:
                net, train_config = _train_and_save(
                    spec, f"env-{train_setting}", seed, env_setting=scenario, preset=preset
                )
                goal = train_config.eval_goal(net.config.predicted_count)
                for test_setting in ENV_MATRIX_TEST_SETTINGS:
                    stats = evaluate(
                        net,
                        spec.env_factory(test_setting, **held_out_overrides(test_setting)),
                        goal,
                        spec.eval_episodes,
                        seed=seed + EVAL_SEED_OFFSET,
                    )
                    scores[test_setting].append(stats.mean_of(FRAGS))
            for test_setting in ENV_MATRIX_TEST_SETTINGS:
                table.add(
                    train_setting=train_setting,
                    test_setting=test_setting,
                    seeds=len(scores[test_setting]),
                    mean_frags=float(np.mean(scores[test_setting])),
                )
        _publish(table, spec, rec)
    return table


RUNNERS = {
    "train": run_train,
    "evaluate": run_evaluate,
    "ablation-table": run_ablation_table,
    "goal-matrix": run_goal_matrix,
    "env-matrix": run_env_matrix,
    "calibrate": run_calibrate,
}


def run(spec: ExperimentSpec, **kwargs):
    return RUNNERS[spec.kind](spec, **kwargs)



__all__ = [
    "ABLATION_VARIANTS",
    "EXPERIMENT_KINDS",
    "ExperimentSpec",
    "ResultTable",
    "RunRecorder",
    "load_spec",
    "run",
    "run_ablation_table",
    "run_calibrate",
    "run_env_matrix",
    "run_evaluate",
    "run_goal_matrix",
    "run_train",
]
