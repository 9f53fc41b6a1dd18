from __future__ import annotations

from ...harness import run_env_matrix
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train on five environment settings and test each model on four."
    kind = "env-matrix"

    def run(self, spec, options) -> None:
        self.write_table(run_env_matrix(spec, recorder=self.recorder(options)))
