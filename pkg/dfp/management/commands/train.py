from __future__ import annotations

import numpy as np

from ...harness import run_train
from ...records import DatabaseRecorder
from ...render import render_sensory
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train a predictor on one scenario and save its report and checkpoint."
    kind = "train"

    def run(self, spec, options) -> None:
        recorder = self.recorder(options)
        net, report = run_train(spec, recorder=recorder, progress=self.write_progress)
        if isinstance(recorder, DatabaseRecorder):
            env = spec.env_factory()()
            _, observation = env.reset(np.random.default_rng(spec.seed))
            recorder.attach_preview(render_sensory(observation.sensory))
        self.stdout.write(f"{report.updates} updates, {len(net.store)} parameter tensors")
