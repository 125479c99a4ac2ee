"""End-to-end acceptance checks over the committed loan fixtures.

Each check prints a single PASS/FAIL summary line; run with
`pytest tests/test_acceptance.py -s -q` to read them as a checklist.
Tolerances and time budgets are pinned in the asserts.
"""

import json
import math
import random
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from oracles import oracle_flip_stats, oracle_nearest
from oversight.config import ServiceConfig
from oversight.engine import (
    SearchConfig,
    detect_discrimination,
    enumerate_protected_variants,
    nearest_counterfactual,
)
from oversight.models import Label, load_model, load_model_file, predict
from oversight.monitor import AUTO_FINAL, MonitorConfig, group_outcome_rates
from oversight.schema import (
    ingest_dataset,
    load_schema,
    load_schema_file,
    normalized_distance,
    substitute,
    validate_instance,
)
from oversight.service import build_runtime, create_app
from oversight.store import AuditRecord, ReviewStore, now_iso

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
MODEL_FILES = [
    "model_blind.json",
    "model_gender.json",
    "model_mixed.json",
    "model_race_tree.json",
]
TOKEN = "acceptance-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}


def announce(number, title, ok, detail):
    print(f"[acceptance {number}] {title}: {'PASS' if ok else 'FAIL'} ({detail})")


def random_loan_record(rng):
    return {
        "income": rng.uniform(0, 200000),
        "debt_ratio": rng.uniform(0, 1),
        "credit_score": rng.uniform(300, 850),
        "gender": rng.choice(["male", "female"]),
        "race": rng.choice(["groupA", "groupB", "groupC"]),
    }


@pytest.fixture(scope="module")
def loan():
    schema = load_schema_file(FIXTURES / "loan_schema.json")
    schema_doc = json.loads((FIXTURES / "loan_schema.json").read_text())
    with open(FIXTURES / "loans_200.csv", newline="") as fh:
        instances, rejections = ingest_dataset(schema, fh)
    assert not rejections and len(instances) == 200
    return schema, schema_doc, instances


def test_01_detector_matches_brute_force(loan):
    schema, schema_doc, instances = loan
    started = time.perf_counter()
    discrepancies = 0
    for model_file in MODEL_FILES:
        model = load_model_file(FIXTURES / model_file, schema)
        model_doc = json.loads((FIXTURES / model_file).read_text())
        for x in instances:
            flagged = detect_discrimination(model, schema, x).flip_fraction > 0.0
            _, _, _, expected = oracle_flip_stats(model_doc, schema_doc, x.to_record(schema))
            discrepancies += flagged != expected
    elapsed = time.perf_counter() - started
    ok = discrepancies == 0 and elapsed < 5.0
    announce(
        1,
        "detector equals six-combination brute force over 200 rows x 4 models",
        ok,
        f"{discrepancies} discrepancies, {elapsed:.2f}s",
    )
    assert discrepancies == 0
    assert elapsed < 5.0


def test_02_protected_blind_soundness(loan):
    schema, _, _ = loan
    model = load_model_file(FIXTURES / "model_blind.json", schema)
    rng = random.Random(1234)
    nonzero = 0
    for _ in range(1000):
        x = validate_instance(schema, random_loan_record(rng))
        if detect_discrimination(model, schema, x).flip_fraction != 0.0:
            nonzero += 1
    ok = nonzero == 0
    announce(2, "protected-blind model never flips on 1000 random instances", ok, f"{nonzero} nonzero")
    assert nonzero == 0


def test_03_enumeration_law():
    rng = random.Random(99)
    checked = 0
    for trial in range(50):
        domains = {
            f"p{i}": [f"v{j}" for j in range(rng.randint(2, 5))]
            for i in range(rng.randint(1, 4))
        }
        features = [
            {"name": "x0", "type": "numeric", "values": [0, 100], "mutable": True},
            {"name": "x1", "type": "numeric", "values": [0, 50]},
        ]
        features += [
            {"name": name, "type": "categorical", "values": values, "protected": True}
            for name, values in domains.items()
        ]
        schema = load_schema(
            json.dumps({"version": f"e{trial}", "positive_label": "y", "features": features})
        )
        record = {"x0": rng.uniform(0, 100), "x1": rng.uniform(0, 50)}
        for name, values in domains.items():
            record[name] = rng.choice(values)
        x = validate_instance(schema, record)

        assignments, truncated = enumerate_protected_variants(schema, x, cap=5000)
        expected = math.prod(len(v) for v in domains.values()) - 1
        assert not truncated
        assert len(assignments) == expected
        assert len(set(assignments)) == expected
        original = tuple((name, record[name]) for name in domains)
        for assignment in assignments:
            assert assignment != original
            variant = substitute(schema, x, dict(assignment))
            for feat, before, after in zip(schema.features, x.values, variant.values):
                if not feat.protected:
                    assert before == after
        checked += expected
    announce(3, "variant count and locality over 50 random schemas", True, f"{checked} variants checked")


def _random_search_fixture(rng, trial):
    """A schema/model/instance triple with <= 3 mutable features whose full
    grid stays small enough for the exhaustive oracle."""
    n_mutable = rng.randint(1, 3)
    level_cap = 27 if n_mutable == 3 else 50
    levels = rng.randint(4, level_cap)
    features = []
    for i in range(n_mutable):
        roll = rng.random()
        if roll < 0.25:
            values = [f"c{j}" for j in range(rng.randint(2, 6))]
            features.append(
                {"name": f"f{i}", "type": "categorical", "values": values, "mutable": True}
            )
            continue
        lower = round(rng.uniform(-50, 0), 3)
        upper = round(lower + rng.uniform(10, 150), 3)
        if roll < 0.65:
            k = rng.randint(4, level_cap)
            bounds = [lower, upper, (upper - lower) / (k - 1)]
        else:
            bounds = [lower, upper]  # falls back to the levels grid
        features.append({"name": f"f{i}", "type": "numeric", "values": bounds, "mutable": True})
    features.append({"name": "g", "type": "categorical", "values": ["a", "b"], "protected": True})
    schema_doc = {"version": f"s{trial}", "positive_label": "y", "features": features}
    schema = load_schema(json.dumps(schema_doc))

    mutable = [f for f in features if f.get("mutable")]
    if rng.random() < 0.7:
        weights = {}
        for f in mutable:
            if f["type"] == "numeric":
                span = f["values"][1] - f["values"][0]
                weights[f["name"]] = rng.uniform(-4.0, 4.0) / span
            else:
                weights[f["name"]] = {
                    v: round(rng.uniform(-1.5, 1.5), 3)
                    for v in rng.sample(f["values"], rng.randint(1, len(f["values"])))
                }
        model_doc = {
            "model_id": f"m{trial}",
            "kind": "linear_logistic",
            "intercept": round(rng.uniform(-2.5, 2.5), 3),
            "weights": weights,
        }
    else:
        nodes = []

        def grow(depth):
            index = len(nodes)
            if depth >= 2 or (depth > 0 and rng.random() < 0.3):
                nodes.append({"score": round(rng.random(), 3)})
                return index
            f = rng.choice(mutable)
            node = {"feature": f["name"]}
            nodes.append(node)
            if f["type"] == "numeric":
                node["threshold"] = round(rng.uniform(f["values"][0], f["values"][1]), 3)
            else:
                node["categories"] = rng.sample(f["values"], rng.randint(1, len(f["values"]) - 1))
            node["left"] = grow(depth + 1)
            node["right"] = grow(depth + 1)
            return index

        grow(0)
        model_doc = {"model_id": f"m{trial}", "kind": "decision_tree", "nodes": nodes}

    model = load_model(json.dumps(model_doc), schema)
    record = {}
    for f in features:
        if f["type"] == "numeric":
            record[f["name"]] = round(rng.uniform(f["values"][0], f["values"][1]), 3)
        else:
            record[f["name"]] = rng.choice(f["values"])
    x = validate_instance(schema, record)
    return schema_doc, schema, model_doc, model, record, x, levels


def test_04_search_matches_exhaustive_oracle():
    rng = random.Random(20240817)
    started = time.perf_counter()
    found = mismatches = agreements_none = 0
    for trial in range(100):
        schema_doc, schema, model_doc, model, record, x, levels = _random_search_fixture(rng, trial)
        target = predict(model, x).label.opposite()
        config = SearchConfig(grid_levels=levels)
        result = nearest_counterfactual(model, schema, x, target, config)
        oracle_obj, _ = oracle_nearest(
            model_doc, schema_doc, record, target.value, grid_levels=levels
        )
        if oracle_obj is None:
            if result.counterfactual is not None:
                mismatches += 1
            else:
                agreements_none += 1
            continue
        if result.counterfactual is None:
            mismatches += 1
            continue
        found += 1
        if abs(result.counterfactual.objective - oracle_obj) > 1e-6:
            mismatches += 1
        if result.counterfactual.prediction.label is not target:
            mismatches += 1
    elapsed = time.perf_counter() - started
    ok = mismatches == 0 and elapsed < 30.0
    announce(
        4,
        "nearest-counterfactual search within 1e-6 of the exhaustive oracle on 100 fixtures",
        ok,
        f"{found} found, {agreements_none} agreed-none, {mismatches} mismatches, {elapsed:.1f}s",
    )
    assert mismatches == 0
    assert elapsed < 30.0


def test_05_distance_metric_laws(loan):
    schema, _, _ = loan
    rng = random.Random(5150)
    worst = 0.0
    for _ in range(10_000):
        a = validate_instance(schema, random_loan_record(rng))
        b = validate_instance(schema, random_loan_record(rng))
        c = validate_instance(schema, random_loan_record(rng))
        dab = normalized_distance(schema, a, b)
        dba = normalized_distance(schema, b, a)
        dbc = normalized_distance(schema, b, c)
        dac = normalized_distance(schema, a, c)
        assert dab >= 0.0
        assert normalized_distance(schema, a, a) == 0.0
        assert dab == dba
        slack = dac - (dab + dbc)
        worst = max(worst, slack)
        assert slack <= 1e-12
    announce(5, "metric laws over 10000 random triples", True, f"worst triangle slack {worst:.2e}")


def test_06_gate_law_and_api_conservation(loan, tmp_path):
    schema, _, instances = loan
    config = ServiceConfig(
        schema_path=str(FIXTURES / "loan_schema.json"),
        model_path=str(FIXTURES / "model_mixed.json"),
        audit_path=str(tmp_path / "audit.log"),
        auth_token=TOKEN,
        monitor=MonitorConfig(),
    )
    runtime = build_runtime(config)
    try:
        statuses = [runtime.monitor.process_decision(x).status for x in instances]
        auto = statuses.count("auto_final")
        pending = statuses.count("pending_review")
        errors = statuses.count("error")
        assert auto + pending + errors == len(instances)
        assert errors == 0

        lam = config.monitor.lam
        gate_violations = 0
        for record in runtime.store.records_snapshot():
            if record.outcome == "auto_final":
                if not (record.flip_fraction <= lam and record.final_label == record.model_label):
                    gate_violations += 1
            elif record.outcome == "flagged_pending":
                if not record.flip_fraction > lam:
                    gate_violations += 1
        assert gate_violations == 0

        client = TestClient(create_app(runtime))
        to_resolve = client.get("/v1/cases", params={"limit": 20}, headers=AUTH).json()["cases"]
        assert len(to_resolve) == 20
        for i, case in enumerate(to_resolve):
            verdict = "accept" if i % 2 == 0 else "override"
            r = client.post(
                f"/v1/cases/{case['case_id']}/resolution",
                headers=AUTH,
                json={"reviewer_id": f"rev{i}", "verdict": verdict},
            )
            assert r.status_code == 200
            expected = (
                case["model_label"]
                if verdict == "accept"
                else Label(case["model_label"]).opposite().value
            )
            assert r.json()["final_label"] == expected
            remaining = len(runtime.store.pending_case_ids())
            human = sum(1 for rec in runtime.store.records_snapshot() if rec.outcome == "human_final")
            assert remaining == pending - (i + 1)
            assert human == i + 1
        ok = True
    finally:
        runtime.close()
    announce(
        6,
        "gate law on every record; requests conserve; API resolutions drain one-for-one",
        ok,
        f"{auto} auto, {pending} pending, 20 resolved via HTTP",
    )


def test_07_group_rates_hand_fixture(loan):
    schema, _, _ = loan

    def rec(request_id, gender, label):
        return AuditRecord(
            request_id=request_id,
            timestamp=now_iso(),
            instance=dict(random_loan_record(random.Random(0)), gender=gender),
            model_id="m",
            model_score=0.9 if label is Label.POSITIVE else 0.1,
            model_label=label,
            flip_fraction=0.0,
            lam=0.0,
            outcome=AUTO_FINAL,
            final_label=label,
            engine_version="1.0",
            config_digest="d",
        )

    records = [rec(f"m{i}", "male", Label.POSITIVE) for i in range(4)]
    records.append(rec("m4", "male", Label.NEGATIVE))
    records.append(rec("f0", "female", Label.POSITIVE))
    records += [rec(f"f{i}", "female", Label.NEGATIVE) for i in range(1, 5)]

    rates = group_outcome_rates(records, schema, "gender")
    ok = (
        rates.rates == {"male": 0.8, "female": 0.2}
        and rates.counts == {"male": 5, "female": 5}
        and abs(rates.disparity - 0.6) < 1e-15
    )
    announce(7, "hand-recounted 10-record log yields rates 0.8/0.2, disparity 0.6", ok, f"{rates.rates}")
    assert rates.rates == {"male": 0.8, "female": 0.2}
    assert rates.counts == {"male": 5, "female": 5}
    assert abs(rates.disparity - 0.6) < 1e-15


def _scan_pending_from_log(path):
    """Independent reading of the audit file: flagged-pending case ids minus
    those with a terminal record, using only complete lines."""
    raw = path.read_bytes().decode("utf-8")
    lines = raw.split("\n")
    if not raw.endswith("\n"):
        lines = lines[:-1]
    pending, terminal, count = set(), set(), 0
    for line in lines:
        if not line:
            continue
        record = json.loads(line)
        count += 1
        if record["outcome"] == "flagged_pending":
            pending.add(record["case_id"])
        elif record["outcome"] in ("human_final", "machine_default") and record.get("case_id"):
            terminal.add(record["case_id"])
    return pending - terminal, count


def test_08_crash_recovery_mid_replay(tmp_path):
    audit_path = tmp_path / "audit.log"
    child = subprocess.Popen(
        [
            sys.executable,
            str(Path(__file__).with_name("_replay_child.py")),
            str(FIXTURES / "loan_schema.json"),
            str(FIXTURES / "model_mixed.json"),
            str(audit_path),
            str(FIXTURES / "loans_200.csv"),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
    )
    try:
        deadline = time.monotonic() + 60
        while time.monotonic() < deadline:
            if child.poll() is not None:
                raise AssertionError(f"replay child died: {child.stderr.read().decode()}")
            if audit_path.exists():
                text = audit_path.read_text()
                if text.count("\n") >= 20 and '"flagged_pending"' in text:
                    break
            time.sleep(0.02)
        else:
            raise AssertionError("replay child produced fewer than 20 decisions in 60s")
    finally:
        child.kill()  # SIGKILL: no cleanup, the log stays as-is
        child.wait()

    expected_pending, complete_records = _scan_pending_from_log(audit_path)
    with ReviewStore(str(audit_path)) as recovered:
        recovered_pending = set(recovered.pending_case_ids())
        recovered_seq = recovered.last_seq()
    ok = recovered_pending == expected_pending and recovered_seq == complete_records
    announce(
        8,
        "pending set rebuilt after SIGKILL equals the log-scan set",
        ok,
        f"{complete_records} records survived, {len(expected_pending)} pending",
    )
    assert complete_records >= 20
    assert expected_pending, "expected at least one unresolved flagged case"
    assert recovered_pending == expected_pending
    assert recovered_seq == complete_records


def test_09_exactly_once_resolution(loan, tmp_path):
    schema, _, _ = loan
    config = ServiceConfig(
        schema_path=str(FIXTURES / "loan_schema.json"),
        model_path=str(FIXTURES / "model_gender.json"),
        audit_path=str(tmp_path / "audit.log"),
        auth_token=TOKEN,
        monitor=MonitorConfig(),
    )
    runtime = build_runtime(config)
    try:
        outcome = runtime.monitor.process_decision(
            validate_instance(schema, random_loan_record(random.Random(8)))
        )
        assert outcome.status == "pending_review"
        case_id = outcome.case_id

        client = TestClient(create_app(runtime))
        barrier = threading.Barrier(10)
        codes = []
        lock = threading.Lock()

        def attempt(i):
            barrier.wait()
            r = client.post(
                f"/v1/cases/{case_id}/resolution",
                headers=AUTH,
                json={"reviewer_id": f"rev{i}", "verdict": "accept"},
            )
            with lock:
                codes.append(r.status_code)

        threads = [threading.Thread(target=attempt, args=(i,)) for i in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        human_final = [r for r in runtime.store.records_snapshot() if r.outcome == "human_final"]
        ok = sorted(codes) == [200] + [409] * 9 and len(human_final) == 1
    finally:
        runtime.close()
    announce(
        9,
        "ten concurrent resolutions: one success, nine conflicts, one record",
        ok,
        f"codes {sorted(codes)}",
    )
    assert sorted(codes) == [200] + [409] * 9
    assert len(human_final) == 1
