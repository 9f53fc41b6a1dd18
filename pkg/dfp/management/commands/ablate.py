from __future__ import annotations

from ...harness import run_ablation_table
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train and evaluate the measurement/offset and architecture ablations."
    kind = "ablation-table"

    def run(self, spec, options) -> None:
        self.write_table(run_ablation_table(spec, recorder=self.recorder(options)))
