"""Mirror runs, report rows and table rows into the database."""
from __future__ import annotations

import io
import logging
from collections.abc import Mapping

from django.core.files.base import ContentFile

from .config import format_value
from .harness import ExperimentSpec, RunRecorder
from .models import EvaluationPoint, ExperimentRun, ResultRow
from .trainer import EvaluationPoint as ReportPoint

logger = logging.getLogger(__name__)

# Row keys that have their own ResultRow column; everything else goes to metrics.
_VARIANT_KEYS = ("variant", "train_regime", "policy", "measurement")
_TEST_KEYS = ("test_setting", "test_goal")


class DatabaseRecorder(RunRecorder):
    def __init__(self) -> None:
        self.run: ExperimentRun | None = None

    def start(self, spec: ExperimentSpec) -> None:
        config = {key: format_value(value) for key, value in spec.snapshot().items()}
        config["measurement_names"] = format_value(spec.env_factory()().measurement_names)
        self.run = ExperimentRun.objects.create(
            kind=spec.kind,
            scenario=spec.scenario,
            preset=spec.preset,
            seed=spec.seed,
            output_dir=spec.output_dir,
            config=config,
        )
        logger.debug("recording run %s", self.run.pk)

    def evaluation_point(self, point: ReportPoint) -> None:
        EvaluationPoint.objects.create(
            run=self.run,
            step=point.step,
            epsilon=point.epsilon,
            learning_rate=point.learning_rate,
            means=list(point.means),
            stds=list(point.stds),
            wall_clock=point.wall_clock,
            steps_per_sec=point.steps_per_sec,
        )

    def result_row(self, table: str, row: Mapping[str, object]) -> None:
        variant = next((row[key] for key in _VARIANT_KEYS if key in row), "")
        test = next((row[key] for key in _TEST_KEYS if key in row), "")
        metrics = {
            key: value
            for key, value in row.items()
            if key not in _VARIANT_KEYS + _TEST_KEYS + ("train_setting", "seeds")
        }
        ResultRow.objects.create(
            run=self.run,
            table=table,
            variant=format_value(variant),
            train_setting=str(row.get("train_setting", "")),
            test_setting=format_value(test),
            seeds=int(row.get("seeds", 1)),
            metrics={key: _jsonable(value) for key, value in metrics.items()},
        )

    def attach_preview(self, image) -> None:
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        self.run.preview.save(f"run-{self.run.pk}.png", ContentFile(buffer.getvalue()), save=True)

    def finish(self, status: str) -> None:
        if self.run is None:
            return
        self.run.status = status
        self.run.save(update_fields=["status", "updated_at"])


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value
