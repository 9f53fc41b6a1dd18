from __future__ import annotations

from ...checkpoint import load_checkpoint
from ...harness import checkpoint_path, run_evaluate
from ...render import render_episode, save_episode_frames
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Evaluate a saved predictor with the greedy policy next to a random-policy baseline."
    kind = "evaluate"

    def add_arguments(self, parser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", help="Checkpoint to evaluate (default: <out>/checkpoints/final.dfp).")
        parser.add_argument("--frames", help="Write PNG frames of one greedy episode to this directory.")

    def run(self, spec, options) -> None:
        table = run_evaluate(spec, recorder=self.recorder(options))
        self.write_table(table)
        if options.get("frames"):
            net = load_checkpoint(checkpoint_path(spec))
            goal = spec.train_config().eval_goal(net.config.predicted_count)
            frames = render_episode(net, spec.env_factory()(), goal, seed=spec.seed)
            paths = save_episode_frames(frames, options["frames"])
            self.stdout.write(f"wrote {len(paths)} frames to {options['frames']}")
