from __future__ import annotations

from django.core.management.base import BaseCommand, CommandError

from ...exceptions import DFPError
from ...forms import ExperimentSpecForm
from ...harness import ExperimentSpec, RunRecorder
from ...records import DatabaseRecorder


class ExperimentCommand(BaseCommand):
    """Shared options and error handling for the experiment verbs."""

    kind = "train"

    def add_arguments(self, parser) -> None:
        parser.add_argument("--scenario", help="Scenario: G1..G4, optionally with -tx (randomized palettes).")
        parser.add_argument("--preset", help="Predictor preset: desk, desk-large or a1.")
        parser.add_argument("--seed", type=int, help="Base seed.")
        parser.add_argument("--steps", type=int, help="Total agent steps per training run.")
        parser.add_argument("--goal", help="Comma-separated measurement weights, e.g. 0.5,0.5,1.")
        parser.add_argument("--out", help="Output directory.")
        parser.add_argument("--actors", type=int, help="Number of actor threads.")
        parser.add_argument(
            "--deterministic",
            action="store_true",
            help="Force a single actor so the run is bit-reproducible.",
        )
        parser.add_argument("--eval-episodes", dest="eval_episodes", type=int, help="Evaluation episodes per cell.")
        parser.add_argument("--seeds", dest="seeds_per_cell", type=int, help="Training seeds per table cell.")
        parser.add_argument("--map", dest="map_file", help="Plain-text map to use instead of the built-in layout.")
        parser.add_argument("--config", dest="config_file", help="key=value config file, e.g. a saved config.txt.")
        parser.add_argument(
            "--no-record",
            dest="record",
            action="store_false",
            help="Do not mirror the run into the database.",
        )

    def build_spec(self, options) -> ExperimentSpec:
        data = {
            key: options.get(key)
            for key in (
                "scenario",
                "preset",
                "seed",
                "steps",
                "goal",
                "out",
                "actors",
                "deterministic",
                "eval_episodes",
                "seeds_per_cell",
                "map_file",
                "config_file",
                "checkpoint",
            )
            if options.get(key) not in (None, False)
        }
        data["kind"] = self.kind
        form = ExperimentSpecForm(data)
        if not form.is_valid():
            raise CommandError("; ".join(form.error_messages()))
        return form.spec

    def recorder(self, options) -> RunRecorder | None:
        return DatabaseRecorder() if options.get("record", True) else None

    def write_progress(self, point) -> None:
        means = " ".join(f"{value:.2f}" for value in point.means)
        self.stdout.write(
            f"step {point.step}  eps {point.epsilon:.3f}  lr {point.learning_rate:.2e}  "
            f"means [{means}]  {point.steps_per_sec:.0f} steps/s"
        )

    def write_table(self, table) -> None:
        self.stdout.write(",".join(table.columns))
        for row in table.rows:
            self.stdout.write(",".join(str(row[column]) for column in table.columns))

    def handle(self, *args, **options):
        spec = self.build_spec(options)
        try:
            self.run(spec, options)
        except DFPError as exc:
            raise CommandError(str(exc)) from exc
        self.stdout.write(self.style.SUCCESS(f"{self.kind} finished; results in {spec.output_dir}"))

    def run(self, spec: ExperimentSpec, options) -> None:
        raise NotImplementedError
