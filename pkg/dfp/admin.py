from django.contrib import admin

from .models import EvaluationPoint, ExperimentRun, ResultRow


class EvaluationPointInline(admin.TabularInline):
    model = EvaluationPoint
    extra = 0
    readonly_fields = ("step", "epsilon", "learning_rate", "means", "stds", "wall_clock", "steps_per_sec")


class ResultRowInline(admin.TabularInline):
    model = ResultRow
    extra = 0


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("id", "kind", "scenario", "preset", "seed", "status", "created_at")
    list_filter = ("kind", "status", "scenario", "preset")
    search_fields = ("kind", "scenario", "preset", "output_dir")
    inlines = [EvaluationPointInline, ResultRowInline]


@admin.register(EvaluationPoint)
class EvaluationPointAdmin(admin.ModelAdmin):
    list_display = ("run", "step", "epsilon", "learning_rate", "steps_per_sec")
    list_filter = ("run__kind",)


@admin.register(ResultRow)
class ResultRowAdmin(admin.ModelAdmin):
    list_display = ("run", "table", "variant", "train_setting", "test_setting", "seeds")
    list_filter = ("table",)
    search_fields = ("variant", "train_setting", "test_setting")
