from __future__ import annotations

from ...harness import run_calibrate
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Measure measurement scales and random-policy terminal statistics."
    kind = "calibrate"

    def run(self, spec, options) -> None:
        self.write_table(run_calibrate(spec, recorder=self.recorder(options)))
