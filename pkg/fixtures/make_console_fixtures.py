"""Captures real gateway responses as JSON fixtures for the console tests.

Runs the service in process against the committed loan schema and models,
pushes a few decisions through, and freezes what the HTTP endpoints return
into frontend/tests/fixtures/. Request ids and timestamps are generated at
capture time, so rerunning changes them; the committed files are the source
of truth for the console test suite.
"""

import csv
import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from oversight.config import MonitorConfig, ServiceConfig
from oversight.service import build_runtime, create_app

HERE = Path(__file__).parent
OUT = HERE.parent / "frontend" / "tests" / "fixtures"
TOKEN = "fixture-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}

APPLICANTS = [
    {"income": 54000, "debt_ratio": 0.31, "credit_score": 702, "gender": "male", "race": "groupA"},
    {"income": 83000, "debt_ratio": 0.12, "credit_score": 655, "gender": "male", "race": "groupB"},
    {"income": 27000, "debt_ratio": 0.44, "credit_score": 590, "gender": "male", "race": "groupC"},
    {"income": 61000, "debt_ratio": 0.27, "credit_score": 731, "gender": "female", "race": "groupA"},
]


def open_client(model_name, audit_dir):
    config = ServiceConfig(
        schema_path=str(HERE / "loan_schema.json"),
        model_path=str(HERE / model_name),
        audit_path=str(Path(audit_dir) / "audit.log"),
        auth_token=TOKEN,
        monitor=MonitorConfig(lam=0.0),
    )
    runtime = build_runtime(config)
    return runtime, TestClient(create_app(runtime))


def dump(name, payload):
    path = OUT / name
    path.write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {path.relative_to(HERE.parent)}")


def capture_gender(audit_dir):
    runtime, client = open_client("model_gender.json", audit_dir)
    try:
        pending = []
        for features in APPLICANTS:
            resp = client.post("/v1/decide", json={"features": features})
            resp.raise_for_status()
            body = resp.json()
            assert body["status"] == "pending_review", body
            pending.append(body["case_id"])

        dump("health.json", client.get("/v1/health").json())
        dump("queue.json", client.get("/v1/cases", headers=AUTH).json())
        dump("case_detail.json", client.get(f"/v1/cases/{pending[0]}", headers=AUTH).json())

        # Resolve three of the four so the group rates have something to
        # count: one accepted positive, one overridden negative, and the
        # female case accepted at its negative model label.
        verdicts = [(pending[1], "accept", None),
                    (pending[2], "override", "score driven by a protected attribute"),
                    (pending[3], "accept", None)]
        for case_id, verdict, rationale in verdicts:
            body = {"reviewer_id": "fixture-reviewer", "verdict": verdict}
            if rationale:
                body["rationale"] = rationale
            resolved = client.post(f"/v1/cases/{case_id}/resolution", headers=AUTH, json=body)
            resolved.raise_for_status()
            if verdict == "override":
                dump("resolution.json", resolved.json())
        dump(
            "case_detail_resolved.json",
            client.get(f"/v1/cases/{pending[2]}", headers=AUTH).json(),
        )
        dump("audit_page.json", client.get("/v1/audit?from=1&limit=50", headers=AUTH).json())
        dump("metrics.json", client.get("/v1/metrics/groups?feature=gender").json())
    finally:
        runtime.close()


def capture_mixed(audit_dir):
    """A flagged case from the mixed model, which has a reachable nearest
    counterfactual unlike the gender-only model."""
    runtime, client = open_client("model_mixed.json", audit_dir)
    try:
        with open(HERE / "loans_200.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                resp = client.post("/v1/decide", json={"features": row})
                resp.raise_for_status()
                body = resp.json()
                if body["status"] == "pending_review":
                    detail = client.get(f"/v1/cases/{body['case_id']}", headers=AUTH)
                    dump("case_detail_mixed.json", detail.json())
                    return
        sys.exit("no row flagged by the mixed model")
    finally:
        runtime.close()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        capture_gender(tmp)
    with tempfile.TemporaryDirectory() as tmp:
        capture_mixed(tmp)


if __name__ == "__main__":
    main()
