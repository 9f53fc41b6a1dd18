from __future__ import annotations

import csv
from functools import wraps

from django.core.paginator import Paginator
from django.db.models import Q
from django.http import HttpRequest, HttpResponse, JsonResponse
from django.shortcuts import get_object_or_404
from django.views.decorators.http import require_GET

from .config import dump_config
from .exceptions import DFPError
from .harness import ExperimentSpec
from .models import EvaluationPoint, ExperimentRun, ResultRow

DEFAULT_PAGE_SIZE = 10
MAX_PAGE_SIZE = 100
# Recorded alongside the snapshot for report headers; not an ExperimentSpec key.
RECORD_ONLY_KEYS = ("measurement_names",)


def json_errors(view):
    @wraps(view)
    def wrapper(request: HttpRequest, *args, **kwargs) -> HttpResponse:
        try:
            return view(request, *args, **kwargs)
        except DFPError as exc:
            return JsonResponse({"success": False, "errors": [str(exc)]}, status=400)

    return wrapper


def _parse_positive_int(value: str | None, default: int, *, max_value: int | None = None) -> int:
    try:
        parsed = int(value) if value is not None else default
    except (TypeError, ValueError):
        return default
    if parsed < 1:
        return default
    if max_value is not None and parsed > max_value:
        return max_value
    return parsed


def _serialize_run(run: ExperimentRun) -> dict[str, object]:
    return {
        "id": run.id,
        "kind": run.kind,
        "scenario": run.scenario,
        "preset": run.preset,
        "seed": run.seed,
        "status": run.status,
        "output_dir": run.output_dir,
        "preview_url": run.preview.url if run.preview else "",
        "created_at": run.created_at.isoformat(),
        "updated_at": run.updated_at.isoformat(),
    }


def _serialize_point(point: EvaluationPoint) -> dict[str, object]:
    return {
        "step": point.step,
        "epsilon": point.epsilon,
        "learning_rate": point.learning_rate,
        "means": point.means,
        "stds": point.stds,
        "wall_clock": point.wall_clock,
        "steps_per_sec": point.steps_per_sec,
    }


def _serialize_result(row: ResultRow) -> dict[str, object]:
    return {
        "table": row.table,
        "variant": row.variant,
        "train_setting": row.train_setting,
        "test_setting": row.test_setting,
        "seeds": row.seeds,
        "metrics": row.metrics,
    }


def _apply_run_search(queryset, query: str):
    trimmed = query.strip()
    if not trimmed:
        return queryset
    filters = (
        Q(kind__icontains=trimmed)
        | Q(scenario__icontains=trimmed)
        | Q(preset__icontains=trimmed)
        | Q(status__icontains=trimmed)
    )
    return queryset.filter(filters)


def _build_paginated_payload(queryset, *, page: int, page_size: int, serializer, query: str):
    paginator = Paginator(queryset, page_size)
    page_obj = paginator.get_page(page)

    data = [serializer(item) for item in page_obj.object_list]
    meta: dict[str, object] = {
        "page": page_obj.number,
        "page_size": page_obj.paginator.per_page,
        "total_pages": page_obj.paginator.num_pages,
        "total_items": page_obj.paginator.count,
        "has_next": page_obj.has_next(),
        "has_previous": page_obj.has_previous(),
        "query": query.strip(),
    }
    return data, meta


@require_GET
def runs_list_api(request: HttpRequest) -> JsonResponse:
    query = request.GET.get("q", "")
    page = _parse_positive_int(request.GET.get("page"), 1)
    page_size = _parse_positive_int(
        request.GET.get("page_size"),
        DEFAULT_PAGE_SIZE,
        max_value=MAX_PAGE_SIZE,
    )
    runs = _apply_run_search(ExperimentRun.objects.all(), query)
    data, meta = _build_paginated_payload(
        runs,
        page=page,
        page_size=page_size,
        serializer=_serialize_run,
        query=query,
    )
    return JsonResponse({"success": True, "data": data, "meta": meta})


@require_GET
def run_detail_api(request: HttpRequest, pk: int) -> JsonResponse:
    run = ExperimentRun.objects.filter(pk=pk).first()
    if run is None:
        return JsonResponse({"success": False, "errors": [f"Run {pk} does not exist."]}, status=404)
    data = _serialize_run(run)
    data["config"] = run.config
    data["report"] = [_serialize_point(point) for point in run.points.all()]
    data["results"] = [_serialize_result(row) for row in run.results.all()]
    return JsonResponse({"success": True, "data": data})


@require_GET
def run_report_csv(request: HttpRequest, pk: int) -> HttpResponse:
    run = get_object_or_404(ExperimentRun, pk=pk)
    points = list(run.points.all())
    width = max((len(point.means) for point in points), default=0)
    names = run.config.get("measurement_names", "").split(",") if run.config.get("measurement_names") else []
    if len(names) != width:
        names = [f"m{index}" for index in range(width)]

    response = HttpResponse(content_type="text/csv")
    response["Content-Disposition"] = f'attachment; filename="run-{run.pk}-report.csv"'
    writer = csv.writer(response, lineterminator="\n")
    header = ["step", "eps", "lr"]
    for name in names:
        header += [f"mean_{name}", f"std_{name}"]
    writer.writerow(header)
    for point in points:
        line = [point.step, repr(point.epsilon), repr(point.learning_rate)]
        for mean, std in zip(point.means, point.stds):
            line += [repr(float(mean)), repr(float(std))]
        writer.writerow(line)
    return response


@require_GET
@json_errors
def run_config_txt(request: HttpRequest, pk: int) -> HttpResponse:
    """Re-emit a run's recorded config as a file ``--config`` accepts."""
    run = get_object_or_404(ExperimentRun, pk=pk)
    mapping = {key: value for key, value in run.config.items() if key not in RECORD_ONLY_KEYS}
    spec = ExperimentSpec.from_config(mapping)
    response = HttpResponse(dump_config(spec.snapshot()), content_type="text/plain; charset=utf-8")
    response["Content-Disposition"] = f'attachment; filename="run-{run.pk}-config.txt"'
    return response
