import json
import math

import pytest
from fastapi.testclient import TestClient

from clozecast.service.app import create_app

from .conftest import write_bundle

WORDS = [
    ".", "questo", "documento", "parla", "di", "e",
    "delibera", "rifiuti", "verde", "tributi", "spese",
    "ambiente", "natura", "finanza", "bilancio", "con",
]

TOY_SPEC = {
    "rules": [
        {
            "when": {"contains": "rifiuti"},
            "probs": {
                "verde": 0.25, "rifiuti": 0.25, "ambiente": 0.2, "natura": 0.1
            },
        },
        {
            "when": {"contains": "tributi"},
            "probs": {
                "spese": 0.25, "tributi": 0.25, "finanza": 0.2, "bilancio": 0.1
            },
        },
    ],
    "default": {"probs": {}},
}

VERBALIZER = {
    "kind": "manual",
    "classes": [
        {
            "id": "Ambiente",
            "words": [{"surface": "ambiente"}, {"surface": "natura"}],
        },
        {"id": "Finanza", "words": [{"surface": "finanza"}]},
    ],
}

TEMPLATE = "{text} parla di {mask}"


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    return str(
        write_bundle(tmp_path_factory.mktemp("bundle"), WORDS, toy_spec=TOY_SPEC)
    )


@pytest.fixture()
def client():
    app = create_app()
    with TestClient(app) as c:
        yield c


def classify_payload(bundle_dir, **overrides):
    payload = {
        "bundle": bundle_dir,
        "records": [
            {"id": "1", "text": "delibera rifiuti verde"},
            {"id": "2", "text": "delibera tributi spese"},
        ],
        "task": "doc",
        "template": TEMPLATE,
        "verbalizer": VERBALIZER,
    }
    payload.update(overrides)
    return payload


class TestHealthAndBundles:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert "version" in body

    def test_load_then_list(self, client, bundle_dir):
        response = client.post("/bundles/load", json={"path": bundle_dir})
        assert response.status_code == 200
        entry = response.json()
        assert entry["kind"] == "toy"
        assert entry["vocab_size"] == len(WORDS) + 5
        assert entry["max_len"] == 64
        listing = client.get("/bundles").json()
        assert [b["path"] for b in listing["bundles"]] == [entry["path"]]

    def test_load_missing_path_is_engine_error(self, client, tmp_path):
        response = client.post(
            "/bundles/load", json={"path": str(tmp_path / "absent")}
        )
        assert response.status_code == 422
        body = response.json()
        assert body["error"] == "BundleInvalid"

    def test_validate_good_bundle(self, client, bundle_dir):
        report = client.post("/bundles/validate", json={"path": bundle_dir}).json()
        assert report["ok"] is True
        assert [c["name"] for c in report["checks"]] == [
            "layout",
            "vocabulary",
            "graph-checksum",
            "backend-load",
            "forward-pass",
        ]
        assert all(c["ok"] for c in report["checks"])

    def test_validate_tampered_bundle_reports_not_raises(
        self, client, tmp_path
    ):
        path = write_bundle(tmp_path / "tampered", WORDS, toy_spec=TOY_SPEC)
        toy = path / "toy.json"
        toy.write_text(toy.read_text() + "\n", encoding="utf-8")
        response = client.post("/bundles/validate", json={"path": str(path)})
        assert response.status_code == 200
        report = response.json()
        assert report["ok"] is False
        failing = {c["name"]: c for c in report["checks"] if not c["ok"]}
        assert "graph-checksum" in failing


class TestClassify:
    def test_predictions(self, client, bundle_dir):
        body = client.post("/classify", json=classify_payload(bundle_dir)).json()
        assert body["calibration_mode"] == "identity"
        assert body["failures"] == []
        predictions = {p["id"]: p for p in body["predictions"]}
        assert predictions["1"]["predicted"] == "Ambiente"
        assert predictions["2"]["predicted"] == "Finanza"
        scores = predictions["1"]["scores"]
        assert set(scores) == {"Ambiente", "Finanza"}
        expected = (math.log(0.2) + math.log(0.1)) / 2
        assert scores["Ambiente"] == pytest.approx(expected)

    def test_record_failures_use_posted_indices(self, client, bundle_dir):
        long_entity = " ".join(["verde"] * 80)
        payload = classify_payload(
            bundle_dir,
            task="entity",
            template="{text} e {entity} di {mask}",
            records=[
                {"id": "a", "text": "delibera rifiuti"},  # missing entity
                {"id": "b", "text": "delibera rifiuti", "entity": "verde"},
                {"id": "c", "text": "delibera", "entity": long_entity},
            ],
        )
        body = client.post("/classify", json=payload).json()
        assert [p["id"] for p in body["predictions"]] == ["b"]
        assert [f["index"] for f in body["failures"]] == [0, 2]
        assert [f["record_id"] for f in body["failures"]] == ["a", "c"]

    def test_identity_calibration_spec_equals_none(self, client, bundle_dir):
        bare = client.post("/classify", json=classify_payload(bundle_dir)).json()
        with_id = client.post(
            "/classify",
            json=classify_payload(bundle_dir, calibration={"mode": "identity"}),
        ).json()
        assert with_id["calibration_mode"] == "identity"
        assert with_id["predictions"] == bare["predictions"]

    def test_contextual_calibration_on_the_fly(self, client, bundle_dir):
        body = client.post(
            "/classify",
            json=classify_payload(bundle_dir, calibration={"mode": "contextual"}),
        ).json()
        assert body["calibration_mode"] == "contextual"
        assert len(body["predictions"]) == 2

    def test_fitted_artifact_matches_bare_mode(self, client, bundle_dir):
        fitted = client.post(
            "/calibrate",
            json={
                "bundle": bundle_dir,
                "mode": "contextual",
                "verbalizer": VERBALIZER,
                "template": TEMPLATE,
            },
        ).json()
        state = fitted["state"]
        assert state["mode"] == "contextual"
        via_artifact = client.post(
            "/classify", json=classify_payload(bundle_dir, calibration=state)
        ).json()
        via_mode = client.post(
            "/classify",
            json=classify_payload(bundle_dir, calibration={"mode": "contextual"}),
        ).json()
        assert via_artifact["predictions"] == via_mode["predictions"]

    def test_batch_calibration_uses_posted_records(self, client, bundle_dir):
        body = client.post(
            "/classify",
            json=classify_payload(bundle_dir, calibration={"mode": "batch"}),
        ).json()
        assert body["calibration_mode"] == "batch"
        # mean corrected score per class over the fitting batch is zero
        for cid in ("Ambiente", "Finanza"):
            column = [p["scores"][cid] for p in body["predictions"]]
            assert sum(column) / len(column) == pytest.approx(0.0, abs=1e-9)

    def test_unknown_task_rejected(self, client, bundle_dir):
        response = client.post(
            "/classify", json=classify_payload(bundle_dir, task="span")
        )
        assert response.status_code == 422
        assert response.json()["error"] == "ConfigInvalid"

    def test_unknown_bundle_rejected(self, client, tmp_path):
        response = client.post(
            "/classify", json=classify_payload(str(tmp_path / "nope"))
        )
        assert response.status_code == 422
        assert response.json()["error"] == "BundleInvalid"


class TestCalibrateEndpoint:
    def test_identity_mode_rejected(self, client, bundle_dir):
        response = client.post(
            "/calibrate",
            json={
                "bundle": bundle_dir,
                "mode": "identity",
                "verbalizer": VERBALIZER,
            },
        )
        assert response.status_code == 422
        assert response.json()["error"] == "ConfigInvalid"

    def test_contextual_state_shape(self, client, bundle_dir):
        body = client.post(
            "/calibrate",
            json={
                "bundle": bundle_dir,
                "mode": "contextual",
                "verbalizer": VERBALIZER,
                "template": TEMPLATE,
            },
        ).json()
        state = body["state"]
        assert state["mode"] == "contextual"
        surfaces = {w["surface"] for w in state["words"]}
        assert surfaces == {"ambiente", "natura", "finanza"}
        for word in state["words"]:
            assert set(word) == {"token_id", "surface", "logprob"}

    def test_batch_needs_records(self, client, bundle_dir):
        response = client.post(
            "/calibrate",
            json={
                "bundle": bundle_dir,
                "mode": "batch",
                "verbalizer": VERBALIZER,
                "template": TEMPLATE,
                "records": [],
            },
        )
        assert response.status_code == 422
        assert response.json()["error"] == "EmptyBatch"

    def test_batch_state_shape(self, client, bundle_dir):
        body = client.post(
            "/calibrate",
            json={
                "bundle": bundle_dir,
                "mode": "batch",
                "verbalizer": VERBALIZER,
                "template": TEMPLATE,
                "records": [
                    {"id": "1", "text": "delibera rifiuti"},
                    {"id": "2", "text": "delibera tributi"},
                ],
            },
        ).json()
        state = body["state"]
        assert state["mode"] == "batch"
        assert {c["id"] for c in state["classes"]} == {"Ambiente", "Finanza"}


class TestBuildKV:
    def test_mining_response(self, client, bundle_dir):
        body = client.post(
            "/build_kv",
            json={
                "bundle": bundle_dir,
                "records": [
                    {"id": "a1", "text": "ambiente rifiuti verde", "label": "ambiente"},
                    {"id": "a2", "text": "rifiuti ambiente verde", "label": "ambiente"},
                    {"id": "b1", "text": "finanza tributi spese", "label": "finanza"},
                    {"id": "b2", "text": "tributi finanza spese", "label": "finanza"},
                ],
                "seeds": {"ambiente": [], "finanza": []},
                "template": "{text} di {mask}",
                "candidates_per_occurrence": 3,
                "cv_size": 4,
                "info_threshold": 2,
            },
        ).json()
        assert body["hit_counts"] == {"ambiente": 2, "finanza": 2}
        assert body["no_occurrence_classes"] == []
        assert body["fallback_classes"] == []
        cv_a = {surface for surface, _ in body["class_vocabularies"]["ambiente"]}
        assert cv_a == {"ambiente", "rifiuti", "verde"}
        verbalizer = body["verbalizer"]
        assert verbalizer["kind"] == "knowledgeable"
        words = {
            c["id"]: {word["surface"] for word in c["words"]}
            for c in verbalizer["classes"]
        }
        assert words["ambiente"] <= cv_a and words["ambiente"]


class TestPLL:
    def test_sentences_aligned_with_errors(self, client, bundle_dir):
        body = client.post(
            "/pll",
            json={
                "bundle": bundle_dir,
                "sentences": [
                    {"id": "s1", "text": "delibera rifiuti"},
                    {"id": "s2", "text": "   "},
                    {"id": "s3", "text": "delibera tributi"},
                ],
            },
        ).json()
        sentences = body["sentences"]
        assert [s["id"] for s in sentences] == ["s1", "s2", "s3"]
        assert sentences[0]["tokens"] == 2
        assert sentences[0]["normalized"] == pytest.approx(
            sentences[0]["raw"] / sentences[0]["tokens"]
        )
        assert sentences[1]["error"]
        assert sentences[1]["raw"] is None
        summary = body["summary"]
        assert summary["std_convention"] == "population"
        assert summary["sentences"] == 2
        assert summary["failures"] == 1


class TestFillMask:
    def test_rates_ranks_and_skips(self, client, bundle_dir):
        body = client.post(
            "/fillmask",
            json={
                "bundle": bundle_dir,
                "records": [
                    {"id": "1", "text": "rifiuti e ambiente", "masked_word": "ambiente"},
                    {"id": "2", "text": "rifiuti"},  # missing masked_word
                    {"id": "3", "text": "zzz delibera", "masked_word": "zzz"},
                ],
                "k": [1, 5],
            },
        ).json()
        assert set(body["hit_rates"]) == {"1", "5"}
        assert body["evaluated"] == 1
        # verde/rifiuti (0.25) outrank the gold "ambiente" (0.2) -> rank 3
        assert body["ranks"] == [{"id": "1", "rank": 3}]
        assert body["hit_rates"]["1"] == 0.0
        assert body["hit_rates"]["5"] == 1.0
        assert [f["index"] for f in body["skipped"]] == [1, 2]


class TestEval:
    def test_report_table_csv(self, client):
        body = client.post(
            "/eval",
            json={
                "pairs": [["1", "A"], ["2", "B"]],
                "gold": {"1": "A", "2": "A"},
                "name": "demo",
            },
        ).json()
        assert body["report"]["accuracy"] == 0.5
        assert "demo" in body["table"]
        assert body["csv"].splitlines()[0] == (
            "report,row,precision,recall,f1,support"
        )

    def test_missing_gold_maps_to_422(self, client):
        response = client.post(
            "/eval", json={"pairs": [["9", "A"]], "gold": {"1": "A"}}
        )
        assert response.status_code == 422
        assert response.json()["error"] == "MissingGold"
