"""Offline fairness tooling: dataset-wide audit reports and stream replay.

batch_audit sweeps a CSV through the detector and summarizes flip behavior
per row and per protected group. replay pushes rows through the live
decision flow (in-process, real store) at a paced rate to rehearse an
online deployment.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

from .engine import SearchConfig, build_explanation, detect_discrimination
from .errors import DatasetError
from .models import Label, load_model_file
from .monitor import STATUS_AUTO_FINAL, STATUS_ERROR, STATUS_PENDING, BiasMonitor
from .schema import Schema, ingest_dataset, load_schema_file
from .store import explanation_payload

HISTOGRAM_BINS = 10


def batch_audit(
    schema_path,
    model_path,
    data_path,
    top_k: int = 5,
    lam: float = 0.0,
    cap: int = 256,
    search: Optional[SearchConfig] = None,
) -> dict:
    """Detector sweep over every valid dataset row.

    The report counts flagged rows (flip_fraction > lam), bins the
    flip_fraction distribution, recomputes per-protected-group positive
    rates over the model's own labels, and attaches full explanations for
    the top_k rows with the highest flip fractions.
    """
    schema = load_schema_file(schema_path)
    model = load_model_file(model_path, schema)
    search = search or SearchConfig()
    try:
        with open(data_path, "r", encoding="utf-8", newline="") as fh:
            instances, rejections = ingest_dataset(schema, fh)
    except OSError as e:
        raise DatasetError(f"cannot read dataset {data_path!r}: {e}") from e

    rows = []
    for i, x in enumerate(instances):
        report = detect_discrimination(model, schema, x, cap)
        rows.append((i, x, report))

    flagged = [(i, x, r) for i, x, r in rows if r.flip_fraction > lam]
    histogram = _flip_histogram([r.flip_fraction for _, _, r in rows])
    group_rates = _model_label_rates(schema, rows)

    worst = sorted(rows, key=lambda row: (-row[2].flip_fraction, row[0]))[:top_k]
    worst_cases = []
    for i, x, report in worst:
        if report.flip_fraction == 0.0:
            break
        explanation = build_explanation(model, schema, x, report, search)
        worst_cases.append(
            {
                "row": i + 1,
                "features": x.to_record(schema),
                "score": report.prediction.score,
                "label": report.prediction.label.value,
                "flip_fraction": report.flip_fraction,
                "truncated": report.truncated,
                "explanation": explanation_payload(explanation),
            }
        )

    total = len(instances) + len(rejections)
    return {
        "model_id": model.model_id,
        "schema_version": schema.version,
        "lambda": lam,
        "total_rows": total,
        "valid_rows": len(instances),
        "rejected_rows": len(rejections),
        "rejections": [{"row": r.row, "reason": r.reason} for r in rejections],
        "flagged_count": len(flagged),
        "flagged_rate": len(flagged) / len(instances) if instances else 0.0,
        "flip_fraction_histogram": histogram,
        "group_rates": group_rates,
        "worst_cases": worst_cases,
    }


def _flip_histogram(fractions: list) -> dict:
    """Counts over [i/10, (i+1)/10) bins, last bin closed; exact zeros are
    also reported on their own since they dominate healthy models."""
    counts = [0] * HISTOGRAM_BINS
    zeros = 0
    for f in fractions:
        if f == 0.0:
            zeros += 1
        index = min(int(f * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)
        counts[index] += 1
    return {
        "bin_width": 1.0 / HISTOGRAM_BINS,
        "counts": counts,
        "zero_count": zeros,
    }


def _model_label_rates(schema: Schema, rows: list) -> dict:
    out = {}
    for feat in schema.protected_features:
        counts: dict[str, int] = {}
        positives: dict[str, int] = {}
        for _, x, report in rows:
            value = x.value(schema, feat.name)
            counts[value] = counts.get(value, 0) + 1
            if report.prediction.label is Label.POSITIVE:
                positives[value] = positives.get(value, 0) + 1
        groups = {
            value: {"count": n, "positive_rate": positives.get(value, 0) / n}
            for value, n in counts.items()
        }
        rates = [g["positive_rate"] for g in groups.values()]
        out[feat.name] = {
            "groups": groups,
            "disparity": (max(rates) - min(rates)) if rates else 0.0,
        }
    return out


@dataclass(frozen=True)
class ReplaySummary:
    rows: int
    valid: int
    rejected: int
    outcomes: dict
    conservation_ok: bool
    latency_ms: dict

    def to_wire(self) -> dict:
        return {
            "rows": self.rows,
            "valid": self.valid,
            "rejected": self.rejected,
            "outcomes": self.outcomes,
            "conservation_ok": self.conservation_ok,
            "latency_ms": self.latency_ms,
        }


def replay(monitor: BiasMonitor, data_path, rate: float) -> ReplaySummary:
    """Feed dataset rows through process_decision at `rate` requests/second.

    The monitor's store takes the writes for real, so a replay leaves the
    same audit trail a live stream would.
    """
    if not (rate > 0) or math.isinf(rate):
        raise ValueError("rate must be a positive number of requests per second")
    schema = monitor.schema
    try:
        with open(data_path, "r", encoding="utf-8", newline="") as fh:
            instances, rejections = ingest_dataset(schema, fh)
    except OSError as e:
        raise DatasetError(f"cannot read dataset {data_path!r}: {e}") from e

    interval = 1.0 / rate
    outcomes = {STATUS_AUTO_FINAL: 0, STATUS_PENDING: 0, STATUS_ERROR: 0}
    latencies = []
    next_send = time.monotonic()
    for x in instances:
        delay = next_send - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        next_send += interval
        started = time.perf_counter()
        outcome = monitor.process_decision(x)
        latencies.append((time.perf_counter() - started) * 1000.0)
        outcomes[outcome.status] += 1

    conservation_ok = sum(outcomes.values()) == len(instances)
    return ReplaySummary(
        rows=len(instances) + len(rejections),
        valid=len(instances),
        rejected=len(rejections),
        outcomes=dict(outcomes),
        conservation_ok=conservation_ok,
        latency_ms=_percentiles(latencies),
    )


def _percentiles(latencies: list) -> dict:
    if not latencies:
        return {"p50": None, "p90": None, "p99": None, "max": None}
    ordered = sorted(latencies)

    def pick(p):
        index = max(0, math.ceil(p / 100.0 * len(ordered)) - 1)
        return round(ordered[index], 3)

    return {"p50": pick(50), "p90": pick(90), "p99": pick(99), "max": round(ordered[-1], 3)}
