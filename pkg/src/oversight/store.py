"""Durable case queue and append-only audit log.

Two files back the store. The audit log is the source of truth: one JSON
object per line, gapless sequence numbers from 1, fsynced before an append
returns, never rewritten. The cases journal holds the full review-case
payloads (variants, explanation) plus resolution rationales; it is written
before the matching audit record, so on recovery any journal entry without
an audit record is an un-acknowledged orphan and is ignored.

Recovery is a full replay of the audit log: the pending set is exactly the
flagged_pending records without a later terminal record. A torn trailing
line (crash mid-write) is truncated on startup; complete records are never
touched.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional

from .engine import Explanation, FlagReport
from .errors import (
    AlreadyResolvedError,
    DuplicateCaseError,
    StoreError,
    UnknownCaseError,
)
from .models import Label

AUTO_FINAL = "auto_final"
FLAGGED_PENDING = "flagged_pending"
HUMAN_FINAL = "human_final"
MACHINE_DEFAULT = "machine_default"
ERROR = "error"

OUTCOMES = (AUTO_FINAL, FLAGGED_PENDING, HUMAN_FINAL, MACHINE_DEFAULT, ERROR)
TERMINAL_OUTCOMES = (AUTO_FINAL, HUMAN_FINAL, MACHINE_DEFAULT, ERROR)

ACCEPT = "accept"
OVERRIDE = "override"

# Serialization order of audit fields; absent optionals are omitted, present
# fields always appear in this order so unchanged records re-serialize to
# identical bytes.
_AUDIT_FIELD_ORDER = (
    "seq",
    "request_id",
    "timestamp",
    "instance",
    "model_id",
    "model_score",
    "model_label",
    "flip_fraction",
    "lambda",
    "outcome",
    "final_label",
    "reviewer_id",
    "verdict",
    "case_id",
    "engine_version",
    "config_digest",
    "detail",
)


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class AuditRecord:
    """One decision event. seq is None until the store assigns it."""

    request_id: str
    timestamp: str
    instance: dict
    model_id: str
    model_score: Optional[float]
    model_label: Optional[Label]
    flip_fraction: float
    lam: float
    outcome: str
    engine_version: str
    config_digest: str
    seq: Optional[int] = None
    final_label: Optional[Label] = None
    reviewer_id: Optional[str] = None
    verdict: Optional[str] = None
    case_id: Optional[str] = None
    detail: Optional[str] = None

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise StoreError(f"unknown outcome {self.outcome!r}")
        if self.outcome != ERROR and (self.model_score is None or self.model_label is None):
            # Only an error before prediction may lack the model's answer.
            raise StoreError(f"{self.outcome} record needs model score and label")
        if self.outcome in (AUTO_FINAL, HUMAN_FINAL, MACHINE_DEFAULT):
            if self.final_label is None:
                raise StoreError(f"{self.outcome} record needs a final label")
        else:
            if self.final_label is not None:
                raise StoreError(f"{self.outcome} record cannot carry a final label")
        if self.outcome == HUMAN_FINAL:
            if not self.reviewer_id or self.verdict not in (ACCEPT, OVERRIDE):
                raise StoreError("human_final record needs reviewer_id and verdict")
        elif self.reviewer_id is not None or self.verdict is not None:
            raise StoreError("only human_final records carry reviewer_id/verdict")

    def to_wire(self) -> dict:
        raw = {
            "seq": self.seq,
            "request_id": self.request_id,
            "timestamp": self.timestamp,
            "instance": self.instance,
            "model_id": self.model_id,
            "model_score": self.model_score,
            "model_label": None if self.model_label is None else self.model_label.value,
            "flip_fraction": self.flip_fraction,
            "lambda": self.lam,
            "outcome": self.outcome,
            "final_label": None if self.final_label is None else self.final_label.value,
            "reviewer_id": self.reviewer_id,
            "verdict": self.verdict,
            "case_id": self.case_id,
            "engine_version": self.engine_version,
            "config_digest": self.config_digest,
            "detail": self.detail,
        }
        return {key: raw[key] for key in _AUDIT_FIELD_ORDER if raw[key] is not None}

    @classmethod
    def from_wire(cls, wire: dict) -> "AuditRecord":
        try:
            return cls(
                seq=wire["seq"],
                request_id=wire["request_id"],
                timestamp=wire["timestamp"],
                instance=wire["instance"],
                model_id=wire["model_id"],
                model_score=wire.get("model_score"),
                model_label=Label(wire["model_label"]) if "model_label" in wire else None,
                flip_fraction=wire["flip_fraction"],
                lam=wire["lambda"],
                outcome=wire["outcome"],
                final_label=Label(wire["final_label"]) if "final_label" in wire else None,
                reviewer_id=wire.get("reviewer_id"),
                verdict=wire.get("verdict"),
                case_id=wire.get("case_id"),
                engine_version=wire["engine_version"],
                config_digest=wire["config_digest"],
                detail=wire.get("detail"),
            )
        except (KeyError, ValueError) as e:
            raise StoreError(f"malformed audit record: {e}") from e


@dataclass(frozen=True)
class ReviewResolution:
    case_id: str
    reviewer_id: str
    verdict: str
    rationale: Optional[str] = None

    def __post_init__(self):
        if not self.case_id:
            raise StoreError("resolution needs a case id")
        if not self.reviewer_id or not self.reviewer_id.strip():
            raise StoreError("resolution needs a non-empty reviewer id")
        if self.verdict not in (ACCEPT, OVERRIDE):
            raise StoreError(f"verdict must be {ACCEPT!r} or {OVERRIDE!r}")


def _encode(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def case_payload(
    case_id: str,
    request_id: str,
    created: str,
    report: FlagReport,
    explanation: Explanation,
    lam: float,
    schema,
) -> dict:
    """Wire form of a review case: everything the reviewer needs, with the
    original prediction and every variant prediction included."""
    original = {
        "features": report.instance.to_record(schema),
        "score": report.prediction.score,
        "label": report.prediction.label.value,
    }
    variants = []
    for v in report.variants:
        variants.append(
            {
                "assignment": dict(v.protected_assignment),
                "features": v.instance.to_record(schema),
                "score": v.prediction.score,
                "label": v.prediction.label.value,
                "flipped": v.flipped,
            }
        )
    return {
        "case_id": case_id,
        "request_id": request_id,
        "created": created,
        "model_id": report.prediction.model_id,
        "original": original,
        "variants": variants,
        "explanation": explanation_payload(explanation),
        "flag": {
            "flip_fraction": report.flip_fraction,
            "lambda": lam,
            "truncated": report.truncated,
            "engine_version": report.engine_version,
        },
    }


def explanation_payload(explanation: Explanation) -> dict:
    native = None
    if explanation.native is not None:
        att = explanation.native
        if att.path:
            native = {
                "kind": att.kind,
                "path": [[f, branch] for f, branch in att.path],
                "leaf_score": att.leaf_score,
            }
        else:
            native = {
                "kind": att.kind,
                "intercept": att.intercept,
                "contributions": [[name, c] for name, c in att.contributions],
            }
    nearest = None
    if explanation.nearest is not None:
        cf = explanation.nearest
        nearest = {
            "score": cf.prediction.score,
            "label": cf.prediction.label.value,
            "objective": cf.objective,
            "distance": cf.distance,
            "changed": [[name, before, after] for name, before, after in cf.changed_features],
        }
    return {
        "native": native,
        "deltas": [
            {
                "changes": [[name, before, after] for name, before, after in d.changes],
                "score_before": d.score_before,
                "score_after": d.score_after,
                "flipped": d.flipped,
            }
            for d in explanation.deltas
        ],
        "nearest": nearest,
        "sensitivities": [
            {
                "feature": s.feature,
                "from": s.from_value,
                "to": s.to_value,
                "score": s.score,
                "label": s.label.value,
            }
            for s in explanation.sensitivities
        ],
        "omissions": {part: reason for part, reason in explanation.omissions},
    }


class ReviewStore:
    """Thread-safe persistence for cases and the audit log.

    All mutation goes through one lock; sequence numbers are assigned in
    append order and an append is durable (written, flushed, fsynced) before
    it returns.
    """

    def __init__(self, audit_path, cases_path=None):
        self.audit_path = os.fspath(audit_path)
        self.cases_path = os.fspath(cases_path) if cases_path else self.audit_path + ".cases"
        self._lock = threading.RLock()
        self._records: list[AuditRecord] = []
        self._latest_by_request: dict[str, AuditRecord] = {}
        # case_id -> payload dict; staged until its flagged_pending record
        # lands, then pending until a terminal record mentions it.
        self._staged: dict[str, dict] = {}
        self._cases: dict[str, dict] = {}
        self._pending: dict[str, dict] = {}
        self._resolutions: dict[str, dict] = {}
        self._case_counter = 0
        self._recover()
        self._audit_fh = open(self.audit_path, "a", encoding="utf-8")
        self._cases_fh = open(self.cases_path, "a", encoding="utf-8")

    # -- recovery ---------------------------------------------------------

    def _recover(self) -> None:
        journal = self._read_journal()
        for entry in journal:
            if entry.get("kind") == "case":
                self._staged[entry["case"]["case_id"]] = entry["case"]
            elif entry.get("kind") == "resolution":
                self._resolutions[entry["resolution"]["case_id"]] = entry["resolution"]

        for line in self._read_repaired_lines(self.audit_path):
            record = AuditRecord.from_wire(json.loads(line))
            expected = len(self._records) + 1
            if record.seq != expected:
                raise StoreError(
                    f"audit log corrupt: expected seq {expected}, found {record.seq}"
                )
            self._absorb(record)
        self._case_counter = len(self._staged) + len(self._cases)

    def _read_journal(self) -> list[dict]:
        entries = []
        for line in self._read_repaired_lines(self.cases_path):
            entries.append(json.loads(line))
        return entries

    @staticmethod
    def _read_repaired_lines(path) -> list[str]:
        """Complete lines of a log file, truncating a torn trailing write."""
        if not os.path.exists(path):
            return []
        with open(path, "rb") as fh:
            blob = fh.read()
        if not blob:
            return []
        keep = len(blob)
        if not blob.endswith(b"\n"):
            cut = blob.rfind(b"\n")
            keep = cut + 1 if cut >= 0 else 0
        else:
            # A complete final line can still be half a record if the crash
            # landed inside a flush; verify it parses, else drop it too.
            tail_start = blob.rfind(b"\n", 0, len(blob) - 1) + 1
            try:
                json.loads(blob[tail_start : len(blob) - 1].decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                keep = tail_start
        if keep != len(blob):
            with open(path, "r+b") as fh:
                fh.truncate(keep)
            blob = blob[:keep]
        return blob.decode("utf-8").splitlines()

    def _absorb(self, record: AuditRecord) -> None:
        """Apply one audit record to the in-memory state (append or replay)."""
        self._records.append(record)
        self._latest_by_request[record.request_id] = record
        if record.outcome == FLAGGED_PENDING and record.case_id:
            payload = self._staged.pop(record.case_id, None)
            if payload is None:
                payload = self._cases.get(record.case_id)
            if payload is None:
                raise StoreError(
                    f"audit log references case {record.case_id!r} "
                    "missing from the cases journal"
                )
            self._pending[record.case_id] = payload
            self._cases[record.case_id] = payload
        elif record.outcome in (HUMAN_FINAL, MACHINE_DEFAULT) and record.case_id:
            self._pending.pop(record.case_id, None)

    # -- identity ---------------------------------------------------------

    def new_case_id(self) -> str:
        """Sortable unique id: zero-padded epoch millis + creation counter."""
        with self._lock:
            self._case_counter += 1
            return f"{int(time.time() * 1000):013d}-{self._case_counter:06d}"

    # -- case lifecycle ---------------------------------------------------

    def enqueue_case(self, payload: dict) -> str:
        """Durably stage a case payload. It becomes visible to list_pending
        once its flagged_pending audit record is appended."""
        case_id = payload.get("case_id")
        if not case_id:
            raise StoreError("case payload needs a case_id")
        with self._lock:
            if case_id in self._staged or case_id in self._cases:
                raise DuplicateCaseError(f"case {case_id!r} already enqueued")
            self._append_journal({"kind": "case", "case": payload})
            self._staged[case_id] = payload
        return case_id

    def list_pending(self, after: Optional[str] = None, limit: int = 50) -> list[dict]:
        if limit < 1:
            raise ValueError("limit must be at least 1")
        with self._lock:
            ids = sorted(self._pending)
            if after is not None:
                ids = [i for i in ids if i > after]
            return [dict(self._pending[i], state="pending") for i in ids[:limit]]

    def get_case(self, case_id: str) -> dict:
        with self._lock:
            payload = self._cases.get(case_id)
            if payload is None:
                raise UnknownCaseError(f"unknown case {case_id!r}")
            state = "pending" if case_id in self._pending else "resolved"
            out = dict(payload, state=state)
            if state == "resolved":
                terminal = self._terminal_for_case(case_id)
                if terminal is not None:
                    out["terminal"] = terminal.to_wire()
                rationale = self._resolutions.get(case_id)
                if rationale is not None:
                    out["resolution"] = rationale
            return out

    def _terminal_for_case(self, case_id: str) -> Optional[AuditRecord]:
        for record in reversed(self._records):
            if record.case_id == case_id and record.outcome in TERMINAL_OUTCOMES:
                return record
        return None

    def resolve_case(self, resolution: ReviewResolution) -> AuditRecord:
        """Exactly-once transition pending -> resolved.

        accept upholds the model label; override issues its complement. The
        human_final audit record is durable before the case leaves the
        pending set; a concurrent second attempt gets AlreadyResolvedError
        carrying the existing terminal record.
        """
        with self._lock:
            if resolution.case_id not in self._cases and resolution.case_id not in self._pending:
                raise UnknownCaseError(f"unknown case {resolution.case_id!r}")
            if resolution.case_id not in self._pending:
                raise AlreadyResolvedError(
                    f"case {resolution.case_id!r} is already resolved",
                    record=self._terminal_for_case(resolution.case_id),
                )
            payload = self._pending[resolution.case_id]
            model_label = Label(payload["original"]["label"])
            final = model_label if resolution.verdict == ACCEPT else model_label.opposite()
            record = AuditRecord(
                request_id=payload["request_id"],
                timestamp=now_iso(),
                instance=payload["original"]["features"],
                model_id=payload["model_id"],
                model_score=payload["original"]["score"],
                model_label=model_label,
                flip_fraction=payload["flag"]["flip_fraction"],
                lam=payload["flag"]["lambda"],
                outcome=HUMAN_FINAL,
                final_label=final,
                reviewer_id=resolution.reviewer_id,
                verdict=resolution.verdict,
                case_id=resolution.case_id,
                engine_version=payload["flag"]["engine_version"],
                config_digest=self._config_digest_for(payload),
            )
            appended = self._append_locked(record)
            entry = {
                "case_id": resolution.case_id,
                "reviewer_id": resolution.reviewer_id,
                "verdict": resolution.verdict,
                "rationale": resolution.rationale,
                "resolved_at": appended.timestamp,
                "final_label": final.value,
            }
            try:
                self._append_journal({"kind": "resolution", "resolution": entry})
            except StoreError:
                # The audit record is the authority; losing the rationale
                # journal entry does not lose the resolution.
                pass
            self._resolutions[resolution.case_id] = entry
            return appended

    def _config_digest_for(self, payload: dict) -> str:
        request_id = payload["request_id"]
        earlier = self._latest_by_request.get(request_id)
        return earlier.config_digest if earlier is not None else ""

    def finalize_machine_default(
        self, case_id: str, final_label: Label, detail: Optional[str] = None
    ) -> AuditRecord:
        """Terminal record for a pending case decided by the timeout policy,
        not a human."""
        with self._lock:
            if case_id not in self._pending:
                if case_id in self._cases:
                    raise AlreadyResolvedError(
                        f"case {case_id!r} is already resolved",
                        record=self._terminal_for_case(case_id),
                    )
                raise UnknownCaseError(f"unknown case {case_id!r}")
            payload = self._pending[case_id]
            record = AuditRecord(
                request_id=payload["request_id"],
                timestamp=now_iso(),
                instance=payload["original"]["features"],
                model_id=payload["model_id"],
                model_score=payload["original"]["score"],
                model_label=Label(payload["original"]["label"]),
                flip_fraction=payload["flag"]["flip_fraction"],
                lam=payload["flag"]["lambda"],
                outcome=MACHINE_DEFAULT,
                final_label=final_label,
                case_id=case_id,
                engine_version=payload["flag"]["engine_version"],
                config_digest=self._config_digest_for(payload),
                detail=detail,
            )
            return self._append_locked(record)

    # -- audit log --------------------------------------------------------

    def append_audit(self, record: AuditRecord) -> AuditRecord:
        """Assign the next sequence number, persist durably, and return the
        completed record."""
        with self._lock:
            return self._append_locked(record)

    def _append_locked(self, record: AuditRecord) -> AuditRecord:
        if record.seq is not None:
            raise StoreError("sequence numbers are assigned by the store")
        completed = replace(record, seq=len(self._records) + 1)
        line = _encode(completed.to_wire()) + "\n"
        try:
            self._audit_fh.write(line)
            self._audit_fh.flush()
            os.fsync(self._audit_fh.fileno())
        except OSError as e:
            raise StoreError(f"audit append failed: {e}") from e
        self._absorb(completed)
        return completed

    def _append_journal(self, entry: dict) -> None:
        try:
            self._cases_fh.write(_encode(entry) + "\n")
            self._cases_fh.flush()
            os.fsync(self._cases_fh.fileno())
        except OSError as e:
            raise StoreError(f"cases journal append failed: {e}") from e

    def read_audit(self, from_seq: int = 1, limit: int = 100) -> list[AuditRecord]:
        if from_seq < 1:
            raise ValueError("from_seq starts at 1")
        if limit < 1:
            raise ValueError("limit must be at least 1")
        with self._lock:
            return list(self._records[from_seq - 1 : from_seq - 1 + limit])

    def last_seq(self) -> int:
        with self._lock:
            return len(self._records)

    def decision_for(self, request_id: str) -> Optional[AuditRecord]:
        """Latest audit record for a request id, or None if never seen."""
        with self._lock:
            return self._latest_by_request.get(request_id)

    def pending_case_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._pending)

    def records_snapshot(self) -> list[AuditRecord]:
        with self._lock:
            return list(self._records)

    def close(self) -> None:
        with self._lock:
            for fh in (self._audit_fh, self._cases_fh):
                try:
                    fh.close()
                except OSError:
                    pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
