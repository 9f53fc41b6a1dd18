from __future__ import annotations

from ...harness import run_goal_matrix
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train fixed-goal and random-goal models and evaluate them under five test goals."
    kind = "goal-matrix"

    def run(self, spec, options) -> None:
        self.write_table(run_goal_matrix(spec, recorder=self.recorder(options)))
