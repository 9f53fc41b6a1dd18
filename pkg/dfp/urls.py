from django.urls import path

from . import views

app_name = "dfp"

urlpatterns = [
    path("api/runs/", views.runs_list_api, name="runs_list_api"),
    path("api/runs/<int:pk>/", views.run_detail_api, name="run_detail_api"),
    path("api/runs/<int:pk>/report.csv", views.run_report_csv, name="run_report_csv"),
    path("api/runs/<int:pk>/config.txt", views.run_config_txt, name="run_config_txt"),
]
