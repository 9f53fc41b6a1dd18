from django.test import TestCase
from django.urls import reverse

from dfp.models import EvaluationPoint, ExperimentRun, ResultRow


class RunApiTests(TestCase):
    @classmethod
    def setUpTestData(cls):
        cls.train_run = ExperimentRun.objects.create(
            kind="train",
            scenario="G3",
            preset="desk",
            seed=1,
            status="finished",
            output_dir="runs/train",
            config={"scenario": "G3", "measurement_names": "ammo,health,frags"},
        )
        for step in (100, 200):
            EvaluationPoint.objects.create(
                run=cls.train_run,
                step=step,
                epsilon=0.5,
                learning_rate=1e-4,
                means=[1.0, 50.0, float(step // 100)],
                stds=[0.5, 2.0, 0.0],
            )
        cls.table_run = ExperimentRun.objects.create(
            kind="ablation-table", scenario="G4", preset="desk-large", output_dir="runs/ablation"
        )
        ResultRow.objects.create(
            run=cls.table_run,
            table="ablation",
            variant="full",
            seeds=3,
            metrics={"mean_frags": 4.5},
        )
        for seed in range(3):
            ExperimentRun.objects.create(kind="calibrate", scenario="G1", preset="desk", seed=seed, output_dir="runs/cal")

    def test_list_is_paginated(self):
        response = self.client.get(reverse("dfp:runs_list_api"), {"page_size": 2, "page": 2})
        self.assertEqual(response.status_code, 200)
        payload = response.json()
        self.assertTrue(payload["success"])
        self.assertEqual(len(payload["data"]), 2)
        self.assertEqual(
            payload["meta"],
            {
                "page": 2,
                "page_size": 2,
                "total_pages": 3,
                "total_items": 5,
                "has_next": True,
                "has_previous": True,
                "query": "",
            },
        )

    def test_bad_paging_values_fall_back(self):
        response = self.client.get(reverse("dfp:runs_list_api"), {"page": "x", "page_size": "1000"})
        meta = response.json()["meta"]
        self.assertEqual((meta["page"], meta["page_size"]), (1, 100))

    def test_search(self):
        response = self.client.get(reverse("dfp:runs_list_api"), {"q": " ablation "})
        payload = response.json()
        self.assertEqual([run["id"] for run in payload["data"]], [self.table_run.pk])
        self.assertEqual(payload["meta"]["query"], "ablation")
        self.assertEqual(payload["data"][0]["preview_url"], "")

    def test_detail(self):
        response = self.client.get(reverse("dfp:run_detail_api", args=[self.train_run.pk]))
        data = response.json()["data"]
        self.assertEqual(data["config"]["scenario"], "G3")
        self.assertEqual([point["step"] for point in data["report"]], [100, 200])
        self.assertEqual(data["results"], [])

        table = self.client.get(reverse("dfp:run_detail_api", args=[self.table_run.pk])).json()["data"]
        self.assertEqual(table["results"][0]["metrics"], {"mean_frags": 4.5})
        self.assertEqual(table["results"][0]["seeds"], 3)

    def test_missing_run(self):
        response = self.client.get(reverse("dfp:run_detail_api", args=[9999]))
        self.assertEqual(response.status_code, 404)
        self.assertFalse(response.json()["success"])
        self.assertEqual(self.client.get(reverse("dfp:run_report_csv", args=[9999])).status_code, 404)

    def test_only_get_is_allowed(self):
        self.assertEqual(self.client.post(reverse("dfp:runs_list_api")).status_code, 405)

    def test_report_csv(self):
        response = self.client.get(reverse("dfp:run_report_csv", args=[self.train_run.pk]))
        self.assertEqual(response["Content-Type"], "text/csv")
        lines = response.content.decode().splitlines()
        self.assertEqual(lines[0], "step,eps,lr,mean_ammo,std_ammo,mean_health,std_health,mean_frags,std_frags")
        self.assertEqual(lines[1], "100,0.5,0.0001,1.0,0.5,50.0,2.0,1.0,0.0")
        self.assertEqual(len(lines), 3)

    def test_report_csv_without_names(self):
        run = ExperimentRun.objects.create(kind="train", scenario="G1", preset="desk", output_dir="runs/x")
        EvaluationPoint.objects.create(run=run, step=5, epsilon=1.0, learning_rate=1e-4, means=[90.0], stds=[1.0])
        lines = self.client.get(reverse("dfp:run_report_csv", args=[run.pk])).content.decode().splitlines()
        self.assertEqual(lines[0], "step,eps,lr,mean_m0,std_m0")

    def test_config_txt_rebuilds_the_recorded_spec(self):
        response = self.client.get(reverse("dfp:run_config_txt", args=[self.train_run.pk]))
        self.assertEqual(response.status_code, 200)
        lines = response.content.decode().splitlines()
        self.assertIn("scenario=G3", lines)
        self.assertIn("kind=train", lines)
        self.assertFalse(any(line.startswith("measurement_names=") for line in lines))

    def test_config_txt_rejects_a_broken_config(self):
        run = ExperimentRun.objects.create(
            kind="train",
            scenario="G1",
            preset="desk",
            output_dir="runs/broken",
            config={"seed": "abc", "train.not_a_key": "1"},
        )
        response = self.client.get(reverse("dfp:run_config_txt", args=[run.pk]))
        self.assertEqual(response.status_code, 400)
        payload = response.json()
        self.assertFalse(payload["success"])
        self.assertEqual(len(payload["errors"]), 1)
        self.assertEqual(self.client.get(reverse("dfp:run_config_txt", args=[9999])).status_code, 404)
