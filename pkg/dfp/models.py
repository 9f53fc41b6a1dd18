from __future__ import annotations

from django.db import models


class ExperimentRun(models.Model):
    class Kind(models.TextChoices):
        TRAIN = "train", "Train"
        EVALUATE = "evaluate", "Evaluate"
        ABLATION_TABLE = "ablation-table", "Ablation table"
        GOAL_MATRIX = "goal-matrix", "Goal matrix"
        ENV_MATRIX = "env-matrix", "Environment matrix"
        CALIBRATE = "calibrate", "Calibrate"

    class Status(models.TextChoices):
        RUNNING = "running", "Running"
        FINISHED = "finished", "Finished"
        FAILED = "failed", "Failed"

    kind = models.CharField(max_length=20, choices=Kind.choices, default=Kind.TRAIN)
    scenario = models.CharField(max_length=20)
    preset = models.CharField(max_length=20)
    seed = models.IntegerField(default=0)
    status = models.CharField(max_length=10, choices=Status.choices, default=Status.RUNNING)
    output_dir = models.CharField(max_length=500)
    config = models.JSONField(default=dict, blank=True)
    preview = models.ImageField(upload_to="previews/", blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ["-created_at", "-id"]

    def __str__(self) -> str:  # pragma: no cover - human readable only
        return f"{self.kind} {self.scenario}/{self.preset} seed {self.seed}"


class EvaluationPoint(models.Model):
    run = models.ForeignKey(ExperimentRun, related_name="points", on_delete=models.CASCADE)
    step = models.PositiveBigIntegerField()
    epsilon = models.FloatField()
    learning_rate = models.FloatField()
    means = models.JSONField(default=list)
    stds = models.JSONField(default=list)
    wall_clock = models.FloatField(default=0.0)
    steps_per_sec = models.FloatField(default=0.0)

    class Meta:
        ordering = ["step", "id"]

    def __str__(self) -> str:  # pragma: no cover - human readable only
        return f"{self.run_id}@{self.step}"


class ResultRow(models.Model):
    run = models.ForeignKey(ExperimentRun, related_name="results", on_delete=models.CASCADE)
    table = models.CharField(max_length=40)
    variant = models.CharField(max_length=100, blank=True)
    train_setting = models.CharField(max_length=40, blank=True)
    test_setting = models.CharField(max_length=60, blank=True)
    seeds = models.PositiveIntegerField(default=1)
    metrics = models.JSONField(default=dict)

    class Meta:
        ordering = ["table", "id"]

    def __str__(self) -> str:  # pragma: no cover - human readable only
        return f"{self.table}: {self.variant or self.train_setting} / {self.test_setting}"
