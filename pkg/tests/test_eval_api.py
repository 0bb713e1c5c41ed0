import json

import pytest
from fastapi.testclient import TestClient

from litpipe.eval_api import SessionStore, create_app, default_rubric, session_from_dict, session_to_dict

MODEL_IDS = ["alpaca-plus-syncovid-7b", "syncovid-only-7b", "syncovid-abstracts-7b", "chatgpt-reference"]


def create_body(n_cases=3, model_ids=None, blind_seed=7, reference=None):
    model_ids = model_ids or MODEL_IDS
    cases = [
        {"case_id": f"c{i}", "instruction": f"Summarize item {i}", "input": f"input body {i}"}
        for i in range(n_cases)
    ]
    responses = [
        {"case_id": c["case_id"], "model_id": m, "text": f"reply {i} {j}"}
        for i, c in enumerate(cases)
        for j, m in enumerate(model_ids)
    ]
    body = {
        "blind_seed": blind_seed,
        "model_ids": model_ids,
        "cases": cases,
        "responses": responses,
    }
    if reference:
        body["reference_model"] = reference
    return body


@pytest.fixture
def client(tmp_path):
    store = SessionStore(tmp_path / "sessions")
    return TestClient(create_app(store))


def valid_judgment(case_id, evaluator="ev1"):
    return {
        "evaluator": evaluator,
        "case_id": case_id,
        "ranks": {"A": 1, "B": 1, "C": 3, "D": 4},
        "grades": {"A": "Excellent", "B": "Pass", "C": "Pass", "D": "Fail"},
    }


def test_full_session_flow(client):
    created = client.post("/sessions", json=create_body()).json()
    sid = created["session_id"]
    assert created["status"] == "open"
    assert created["cases"] == 3
    assert created["labels"] == ["A", "B", "C", "D"]

    seen_cases = []
    for _ in range(3):
        nxt = client.get(f"/sessions/{sid}/cases/next", params={"evaluator": "ev1"}).json()
        assert nxt["done"] is False
        assert len(nxt["responses"]) == 4
        assert nxt["rubric"]
        seen_cases.append(nxt["case_id"])
        resp = client.post(f"/sessions/{sid}/judgments", json=valid_judgment(nxt["case_id"]))
        assert resp.status_code == 200
    assert seen_cases == ["c0", "c1", "c2"]

    done = client.get(f"/sessions/{sid}/cases/next", params={"evaluator": "ev1"}).json()
    assert done["done"] is True
    assert done["progress"] == {"judged": 3, "total": 3}

    # report and unblind refuse while open
    assert client.get(f"/sessions/{sid}/report").status_code == 409
    assert client.get(f"/sessions/{sid}/unblind").status_code == 409

    completed = client.post(f"/sessions/{sid}/complete").json()
    assert completed["status"] == "complete"

    report = client.get(f"/sessions/{sid}/report").json()
    assert report["n_cases"] == 3
    assert set(report["per_model"]) == set(MODEL_IDS)
    for stats in report["per_model"].values():
        assert set(stats["grade_counts"]) == {"Fail", "Pass", "Excellent"}

    unblinded = client.get(f"/sessions/{sid}/unblind").json()
    assert set(unblinded["assignments"]) == {"c0", "c1", "c2"}
    for mapping in unblinded["assignments"].values():
        assert sorted(mapping.keys()) == ["A", "B", "C", "D"]
        assert sorted(mapping.values()) == sorted(MODEL_IDS)


def test_judgment_validation_rejected(client):
    sid = client.post("/sessions", json=create_body()).json()["session_id"]
    bad = valid_judgment("c0")
    bad["ranks"] = {"A": 1, "B": 2, "C": 2, "D": 3}
    resp = client.post(f"/sessions/{sid}/judgments", json=bad)
    assert resp.status_code == 400
    assert "tie structure" in resp.json()["error"]

    missing_grade = valid_judgment("c0")
    del missing_grade["grades"]["C"]
    resp = client.post(f"/sessions/{sid}/judgments", json=missing_grade)
    assert resp.status_code == 400


def test_unknown_session_404(client):
    assert client.get("/sessions/ghost/cases/next", params={"evaluator": "x"}).status_code == 404
    assert client.post("/sessions/ghost/complete").status_code == 404


def test_incomplete_matrix_rejected(client):
    body = create_body()
    body["responses"] = body["responses"][:-1]
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 409
    assert "missing cells" in resp.json()["error"]


def test_report_gaps_listed(client):
    sid = client.post("/sessions", json=create_body()).json()["session_id"]
    client.post(f"/sessions/{sid}/judgments", json=valid_judgment("c0"))
    client.post(f"/sessions/{sid}/complete")
    resp = client.get(f"/sessions/{sid}/report")
    assert resp.status_code == 409
    assert "(ev1, c1)" in resp.json()["error"]


def test_report_head_to_head_with_reference(client):
    sid = client.post("/sessions", json=create_body(reference="chatgpt-reference")).json()["session_id"]
    for case_id in ("c0", "c1", "c2"):
        client.post(f"/sessions/{sid}/judgments", json=valid_judgment(case_id))
    client.post(f"/sessions/{sid}/complete")
    report = client.get(f"/sessions/{sid}/report").json()
    assert set(report["head_to_head"]) == set(MODEL_IDS) - {"chatgpt-reference"}
    for entry in report["head_to_head"].values():
        assert entry["wins"] + entry["ties"] + entry["losses"] == 3


def test_blind_leak_scan_over_all_endpoints(client):
    """While the session is open, no response body may contain a model id."""
    bodies = []

    resp = client.post("/sessions", json=create_body())
    bodies.append(resp.text)
    sid = resp.json()["session_id"]

    for evaluator in ("ev1", "ev2"):
        bodies.append(client.get(f"/sessions/{sid}/cases/next", params={"evaluator": evaluator}).text)

    bodies.append(client.post(f"/sessions/{sid}/judgments", json=valid_judgment("c0")).text)
    bad = valid_judgment("c1")
    bad["ranks"]["A"] = 9
    bodies.append(client.post(f"/sessions/{sid}/judgments", json=bad).text)

    bodies.append(client.get(f"/sessions/{sid}/report").text)
    bodies.append(client.get(f"/sessions/{sid}/unblind").text)
    bodies.append(client.get(f"/sessions/{sid}/cases/next", params={"evaluator": "ev1"}).text)

    for body in bodies:
        for model_id in MODEL_IDS:
            assert model_id not in body, f"model id {model_id} leaked: {body[:200]}"


def test_store_persistence_round_trip(tmp_path):
    store_dir = tmp_path / "sessions"
    store = SessionStore(store_dir)
    client = TestClient(create_app(store))
    sid = client.post("/sessions", json=create_body()).json()["session_id"]
    client.post(f"/sessions/{sid}/judgments", json=valid_judgment("c0"))

    reloaded = SessionStore(store_dir)
    session = reloaded.get(sid)
    assert session.session_id == sid
    assert ("ev1", "c0") in session.judgments
    assert session.status == "open"
    assert session.label_to_model  # permutations survived

    # serialization helpers round-trip exactly
    data = session_to_dict(session)
    again = session_from_dict(json.loads(json.dumps(data)))
    assert session_to_dict(again) == data


def test_resubmission_replaces(client):
    sid = client.post("/sessions", json=create_body()).json()["session_id"]
    client.post(f"/sessions/{sid}/judgments", json=valid_judgment("c0"))
    updated = valid_judgment("c0")
    updated["grades"] = {"A": "Fail", "B": "Fail", "C": "Fail", "D": "Fail"}
    client.post(f"/sessions/{sid}/judgments", json=updated)
    nxt = client.get(f"/sessions/{sid}/cases/next", params={"evaluator": "ev1"}).json()
    assert nxt["progress"] == {"judged": 1, "total": 3}


def test_default_rubric_mentions_dimensions():
    rubric = default_rubric()
    for term in ("helpfulness", "relevance", "accuracy", "level of detail", "Fail", "Pass", "Excellent"):
        assert term in rubric
