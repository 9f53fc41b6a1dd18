from __future__ import annotations

from pathlib import Path

from django import forms
from django.core.exceptions import ValidationError

from .agent import parse_goal
from .exceptions import DFPError
from .harness import EXPERIMENT_KINDS, ExperimentSpec, load_spec
from .predictor import PRESETS

SCENARIO_CHOICES = [(name, name) for name in ("G1", "G2", "G3", "G4", "G1-tx", "G2-tx", "G3-tx", "G4-tx")]


class ExperimentSpecForm(forms.Form):
    kind = forms.ChoiceField(choices=[(kind, kind) for kind in EXPERIMENT_KINDS])
    scenario = forms.ChoiceField(choices=SCENARIO_CHOICES, required=False)
    preset = forms.ChoiceField(choices=[(name, name) for name in PRESETS], required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    steps = forms.IntegerField(min_value=0, required=False)
    goal = forms.CharField(required=False)
    actors = forms.IntegerField(min_value=1, max_value=64, required=False)
    deterministic = forms.BooleanField(required=False)
    eval_episodes = forms.IntegerField(min_value=1, required=False)
    seeds_per_cell = forms.IntegerField(min_value=1, required=False)
    out = forms.CharField(max_length=500, required=False)
    checkpoint = forms.CharField(max_length=500, required=False)
    map_file = forms.CharField(max_length=500, required=False)
    config_file = forms.CharField(max_length=500, required=False)

    def clean_goal(self) -> tuple[float, ...] | None:
        raw = self.cleaned_data.get("goal", "").strip()
        if not raw:
            return None
        try:
            return parse_goal(raw)
        except DFPError as exc:
            raise forms.ValidationError(str(exc)) from exc

    def _clean_existing_file(self, name: str) -> str:
        raw = (self.cleaned_data.get(name) or "").strip()
        if raw and not Path(raw).is_file():
            raise forms.ValidationError(f"File not found: {raw}")
        return raw

    def clean_map_file(self) -> str:
        return self._clean_existing_file("map_file")

    def clean_config_file(self) -> str:
        return self._clean_existing_file("config_file")

    def clean(self) -> dict[str, object]:
        cleaned_data = super().clean()
        kind = cleaned_data.get("kind")
        checkpoint = (cleaned_data.get("checkpoint") or "").strip()
        if kind == "evaluate" and checkpoint and not Path(checkpoint).is_file():
            self.add_error("checkpoint", f"Checkpoint not found: {checkpoint}")
        if kind in ("ablation-table", "goal-matrix"):
            scenario = cleaned_data.get("scenario") or ""
            if scenario and not scenario.startswith(("G3", "G4")):
                self.add_error("scenario", f"{kind} needs a battle scenario (G3 or G4).")
            elif kind == "ablation-table" and scenario and not scenario.endswith("-tx"):
                self.add_error("scenario", "ablation-table needs a palette-randomized scenario (G3-tx or G4-tx).")
        if not self.errors:
            try:
                self.spec = self._build_spec(cleaned_data)
            except DFPError as exc:
                raise ValidationError(str(exc)) from exc
        return cleaned_data

    def _build_spec(self, data) -> ExperimentSpec:
        values: dict[str, object] = {"kind": data["kind"]}
        simple = {
            "scenario": data.get("scenario"),
            "preset": data.get("preset"),
            "seed": data.get("seed"),
            "eval_episodes": data.get("eval_episodes"),
            "seeds_per_cell": data.get("seeds_per_cell"),
            "output_dir": data.get("out"),
            "checkpoint": data.get("checkpoint"),
            "goal": data.get("goal"),
        }
        values.update({key: value for key, value in simple.items() if value not in (None, "")})

        train_overrides: dict[str, object] = {}
        if data.get("steps") is not None:
            train_overrides["total_steps"] = data["steps"]
        if data.get("actors") is not None:
            train_overrides["actors"] = data["actors"]
        if data.get("deterministic"):
            train_overrides["deterministic"] = True
            train_overrides["actors"] = 1
        env_overrides = {"map_file": data["map_file"]} if data.get("map_file") else {}

        if data.get("config_file"):
            base = load_spec(data["config_file"])
            values.setdefault("output_dir", base.output_dir)
            return ExperimentSpec.with_defaults(
                **{
                    "scenario": base.scenario,
                    "preset": base.preset,
                    "seed": base.seed,
                    "eval_episodes": base.eval_episodes,
                    "seeds_per_cell": base.seeds_per_cell,
                    "goal": base.goal,
                    "checkpoint": base.checkpoint,
                    **values,
                    "train_overrides": {**base.train_overrides, **train_overrides},
                    "predictor_overrides": dict(base.predictor_overrides),
                    "env_overrides": {**base.env_overrides, **env_overrides},
                }
            )

        spec = ExperimentSpec.with_defaults(
            **values, train_overrides=train_overrides, env_overrides=env_overrides
        )
        # Resolve every section now so bad values surface as form errors.
        spec.train_config()
        spec.predictor_config()
        spec.env_config()
        return spec

    def error_messages(self) -> list[str]:
        return [f"{field}: {error}" if field != "__all__" else str(error)
                for field, errors in self.errors.items() for error in errors]

