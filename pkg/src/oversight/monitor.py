"""Runtime decision flow: predict, enumerate variants, gate, and route.

Unflagged decisions finalize automatically with the model's label; flagged
ones are queued for human review with a full explanation. Every path leaves
an audit record before the outcome is acknowledged, and the same log feeds
the per-group positive-rate monitor.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

from .engine import SearchConfig, build_explanation, detect_discrimination
from .errors import PredictionUnavailable, SchemaError, StoreError
from .models import Label, ModelSpec
from .schema import Instance, Schema
from .store import (
    AUTO_FINAL,
    ERROR,
    FLAGGED_PENDING,
    HUMAN_FINAL,
    MACHINE_DEFAULT,
    AuditRecord,
    ReviewStore,
    case_payload,
    now_iso,
)

HOLD = "hold"
TIMEOUT_DEFAULT = "timeout_default"

STATUS_AUTO_FINAL = "auto_final"
STATUS_PENDING = "pending_review"
STATUS_ERROR = "error"

#: Outcomes that carry a final label; pending and error records do not.
FINALIZED_OUTCOMES = (AUTO_FINAL, HUMAN_FINAL, MACHINE_DEFAULT)


@dataclass(frozen=True)
class MonitorConfig:
    """Gate threshold and routing policy for one deployment.

    lam is the acceptable flip fraction: strictly greater flags the decision.
    pending_policy hold keeps flagged decisions unanswered until a human
    resolves them; timeout_default issues default_label after
    timeout_seconds, recorded as machine-issued.
    """

    lam: float = 0.0
    enumeration_cap: int = 256
    search: SearchConfig = field(default_factory=SearchConfig)
    pending_policy: str = HOLD
    default_label: Label = Label.NEGATIVE
    timeout_seconds: float = 0.0
    metrics_window: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must be in [0, 1]")
        if self.pending_policy not in (HOLD, TIMEOUT_DEFAULT):
            raise ValueError(f"unknown pending policy {self.pending_policy!r}")
        if self.pending_policy == TIMEOUT_DEFAULT and self.timeout_seconds <= 0:
            raise ValueError("timeout_default policy needs timeout_seconds > 0")
        if self.metrics_window < 1:
            raise ValueError("metrics window must be at least 1")

    def digest(self) -> str:
        """Short stable digest of every behavior-affecting knob, stored in
        audit records so replays can prove config identity."""
        blob = json.dumps(
            {
                "lambda": self.lam,
                "enumeration_cap": self.enumeration_cap,
                "search": {
                    "enumeration_cap": self.search.enumeration_cap,
                    "lambda_dist": self.search.lambda_dist,
                    "margin": self.search.margin,
                    "grid_levels": self.search.grid_levels,
                    "restarts": self.search.restarts,
                    "seed": self.search.seed,
                    "evaluation_budget": self.search.evaluation_budget,
                },
                "pending_policy": self.pending_policy,
                "default_label": self.default_label.value,
                "timeout_seconds": self.timeout_seconds,
                "metrics_window": self.metrics_window,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def apply_gate(flip_fraction: float, lam: float) -> bool:
    """Strictly-greater comparison: a flip fraction equal to lambda passes."""
    return flip_fraction > lam


@dataclass(frozen=True)
class DecisionOutcome:
    """What one decision request produced.

    audit_seq is the sequence number of the record backing this outcome;
    None means durability could not be established and the caller must not
    acknowledge the decision.
    """

    status: str
    request_id: str
    timestamp: str
    flip_fraction: Optional[float] = None
    label: Optional[Label] = None
    score: Optional[float] = None
    case_id: Optional[str] = None
    audit_seq: Optional[int] = None
    detail: Optional[str] = None


@dataclass(frozen=True)
class GroupRates:
    feature: str
    counts: dict
    rates: dict
    disparity: float


def group_outcome_rates(
    records: Iterable[AuditRecord], schema: Schema, feature: str
) -> GroupRates:
    """Per-group positive-outcome rates over finalized records.

    For each value of the protected feature: rate = positives / total among
    records whose instance carries that value. Groups with no records are
    absent. Disparity is max rate minus min rate over the present groups.
    """
    feat = schema.feature(feature)
    if not feat.protected:
        raise SchemaError(f"feature {feature!r} is not protected")
    counts: dict[str, int] = {}
    positives: dict[str, int] = {}
    for record in records:
        if record.outcome not in FINALIZED_OUTCOMES:
            continue
        value = record.instance.get(feature)
        if value is None:
            continue
        counts[value] = counts.get(value, 0) + 1
        if record.final_label is Label.POSITIVE:
            positives[value] = positives.get(value, 0) + 1
    rates = {value: positives.get(value, 0) / n for value, n in counts.items()}
    if rates:
        disparity = max(rates.values()) - min(rates.values())
    else:
        disparity = 0.0
    return GroupRates(feature=feature, counts=counts, rates=rates, disparity=disparity)


class BiasMonitor:
    """Binds model, schema, config, and store into the per-request flow."""

    def __init__(
        self,
        config: MonitorConfig,
        model: ModelSpec,
        schema: Schema,
        store: ReviewStore,
        client=None,
    ):
        self.config = config
        self.model = model
        self.schema = schema
        self.store = store
        self.client = client
        self.config_digest = config.digest()

    # -- decision flow ----------------------------------------------------

    def process_decision(
        self, x: Instance, request_id: Optional[str] = None
    ) -> DecisionOutcome:
        """Run one validated instance through detect -> gate -> route.

        Prediction failure and store failure both yield an error outcome;
        neither ever falls back to releasing the model's label.
        """
        request_id = request_id or uuid.uuid4().hex
        timestamp = now_iso()
        try:
            report = detect_discrimination(
                self.model, self.schema, x, self.config.enumeration_cap, client=self.client
            )
        except PredictionUnavailable as e:
            return self._error_outcome(x, request_id, timestamp, f"prediction unavailable: {e}")

        flagged = apply_gate(report.flip_fraction, self.config.lam)
        report = report.with_flag(flagged)
        if not flagged:
            record = AuditRecord(
                request_id=request_id,
                timestamp=timestamp,
                instance=x.to_record(self.schema),
                model_id=self.model.model_id,
                model_score=report.prediction.score,
                model_label=report.prediction.label,
                flip_fraction=report.flip_fraction,
                lam=self.config.lam,
                outcome=AUTO_FINAL,
                final_label=report.prediction.label,
                engine_version=report.engine_version,
                config_digest=self.config_digest,
            )
            try:
                completed = self.store.append_audit(record)
            except StoreError as e:
                return self._unrecorded_error(request_id, timestamp, f"audit append failed: {e}")
            return DecisionOutcome(
                status=STATUS_AUTO_FINAL,
                request_id=request_id,
                timestamp=completed.timestamp,
                flip_fraction=report.flip_fraction,
                label=report.prediction.label,
                score=report.prediction.score,
                audit_seq=completed.seq,
            )

        explanation = build_explanation(
            self.model, self.schema, x, report, self.config.search, client=self.client
        )
        case_id = self.store.new_case_id()
        payload = case_payload(
            case_id, request_id, timestamp, report, explanation, self.config.lam, self.schema
        )
        record = AuditRecord(
            request_id=request_id,
            timestamp=timestamp,
            instance=x.to_record(self.schema),
            model_id=self.model.model_id,
            model_score=report.prediction.score,
            model_label=report.prediction.label,
            flip_fraction=report.flip_fraction,
            lam=self.config.lam,
            outcome=FLAGGED_PENDING,
            case_id=case_id,
            engine_version=report.engine_version,
            config_digest=self.config_digest,
        )
        try:
            self.store.enqueue_case(payload)
            completed = self.store.append_audit(record)
        except StoreError as e:
            return self._unrecorded_error(request_id, timestamp, f"case enqueue failed: {e}")
        return DecisionOutcome(
            status=STATUS_PENDING,
            request_id=request_id,
            timestamp=completed.timestamp,
            flip_fraction=report.flip_fraction,
            score=report.prediction.score,
            case_id=case_id,
            audit_seq=completed.seq,
        )

    def _error_outcome(
        self, x: Instance, request_id: str, timestamp: str, detail: str
    ) -> DecisionOutcome:
        """Error with a best-effort audit record; audit_seq None when even
        that failed."""
        record = AuditRecord(
            request_id=request_id,
            timestamp=timestamp,
            instance=x.to_record(self.schema),
            model_id=self.model.model_id,
            model_score=None,
            model_label=None,
            flip_fraction=0.0,
            lam=self.config.lam,
            outcome=ERROR,
            engine_version="",
            config_digest=self.config_digest,
            detail=detail,
        )
        seq = None
        try:
            seq = self.store.append_audit(record).seq
        except StoreError:
            pass
        return DecisionOutcome(
            status=STATUS_ERROR,
            request_id=request_id,
            timestamp=timestamp,
            audit_seq=seq,
            detail=detail,
        )

    @staticmethod
    def _unrecorded_error(request_id: str, timestamp: str, detail: str) -> DecisionOutcome:
        return DecisionOutcome(
            status=STATUS_ERROR,
            request_id=request_id,
            timestamp=timestamp,
            audit_seq=None,
            detail=detail,
        )

    # -- pending policy ---------------------------------------------------

    def expire_overdue(self, now: Optional[str] = None) -> list[AuditRecord]:
        """Under the timeout_default policy, finalize pending cases older
        than the timeout with the configured default label. Returns the
        machine_default records issued; the hold policy issues none."""
        if self.config.pending_policy != TIMEOUT_DEFAULT:
            return []
        cutoff = (
            datetime.fromisoformat(now) if now else datetime.now(timezone.utc)
        ).timestamp() - self.config.timeout_seconds
        issued = []
        for case_id in self.store.pending_case_ids():
            case = self.store.get_case(case_id)
            created = datetime.fromisoformat(case["created"]).timestamp()
            if created <= cutoff:
                issued.append(
                    self.store.finalize_machine_default(
                        case_id,
                        self.config.default_label,
                        detail=f"review timeout after {self.config.timeout_seconds}s",
                    )
                )
        return issued

    # -- monitoring -------------------------------------------------------

    def group_rates(self, feature: str) -> GroupRates:
        """Group rates over the last metrics_window finalized records."""
        finalized = [
            r
            for r in self.store.records_snapshot()
            if r.outcome in FINALIZED_OUTCOMES
        ]
        window = finalized[-self.config.metrics_window :]
        return group_outcome_rates(window, self.schema, feature)
