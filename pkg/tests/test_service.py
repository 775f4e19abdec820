import json

import pytest
from fastapi.testclient import TestClient

from famfeat.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def tiny_spec(seed=0):
    return {
        "classes": [
            {"label": "unfamiliar", "profile": {"Alpha1": 0.45, "Alpha2": 0.35}},
            {"label": "very_familiar", "profile": {"Beta2": 0.45, "Beta3": 0.35}},
        ],
        "epochs_per_class": 10,
        "channels": 3,
        "noise_floor": 0.05,
        "seed": seed,
        "trials_per_recording": 10,
    }


def tiny_config(seed=0):
    return {
        "seed": seed,
        "selection": {
            "stage_sizes": [40, 10, 3],
            "wrapper_folds": 5,
        },
        "svm": {"sigma_grid": [0.5, 1.0, 2.0], "refine_steps": 1, "cv_folds": 5},
    }


class TestMeta:
    def test_health(self, client):
        r = client.get("/v1/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_defaults_parse_as_config(self, client):
        from famfeat.config import PipelineConfig

        r = client.get("/v1/defaults")
        assert r.status_code == 200
        assert PipelineConfig.model_validate(r.json()) == PipelineConfig()


class TestValidation:
    def test_missing_fields_422(self, client):
        assert client.post("/v1/preprocess", json={}).status_code == 422

    def test_equal_class_pair_422(self, client):
        r = client.post(
            "/v1/select",
            json={"in": "x.csv", "out": "o", "class_a": "a", "class_b": "a"},
        )
        assert r.status_code == 422

    def test_bad_spec_400(self, client, tmp_path):
        spec = tiny_spec()
        spec["classes"][0]["profile"] = {"Alpha1": 0.9, "Beta2": 0.9}
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        r = client.post("/v1/synth", json={"spec_path": str(path), "out": str(tmp_path / "ds")})
        assert r.status_code == 400
        assert "profile" in r.json()["detail"]

    def test_missing_dataset_400(self, client, tmp_path):
        r = client.post(
            "/v1/preprocess",
            json={"in": str(tmp_path / "nothing"), "out": str(tmp_path / "out")},
        )
        assert r.status_code == 400

    def test_inline_and_path_config_rejected(self, client, tmp_path):
        r = client.post(
            "/v1/extract",
            json={
                "in": "a", "out": "b",
                "config": tiny_config(), "config_path": "also.json",
            },
        )
        assert r.status_code == 422


class TestStages:
    def test_synth_preprocess_extract_flow(self, client, tmp_path):
        raw = tmp_path / "raw"
        r = client.post("/v1/synth", json={"spec": tiny_spec(), "out": str(raw)})
        assert r.status_code == 200
        body = r.json()
        assert body["ok"] and body["stage"] == "synth"
        assert body["summary"]["class_counts"] == {
            "unfamiliar": 10, "very_familiar": 10,
        }

        epochs = tmp_path / "epochs"
        r = client.post(
            "/v1/preprocess",
            json={"in": str(raw), "out": str(epochs), "config": tiny_config()},
        )
        assert r.status_code == 200
        assert r.json()["summary"]["epochs"] == 20
        assert (epochs / "provenance.json").is_file()

        features = tmp_path / "features.csv"
        r = client.post(
            "/v1/extract",
            json={"in": str(epochs), "out": str(features), "config": tiny_config()},
        )
        assert r.status_code == 200
        assert r.json()["summary"]["rows"] == 20
        # 3 channels x 52 + 3 pairs + label column
        assert r.json()["summary"]["columns"] == 3 * 52 + 3 + 1

    def test_seed_override_changes_output(self, client, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        client.post("/v1/synth", json={"spec": tiny_spec(), "out": str(a)})
        client.post("/v1/synth", json={"spec": tiny_spec(), "out": str(b), "seed": 99})
        am = (a / "manifest.json").read_bytes()
        bm = (b / "manifest.json").read_bytes()
        a0 = (a / "rec_000.csv").read_bytes()
        b0 = (b / "rec_000.csv").read_bytes()
        assert a0 != b0 or am != bm
