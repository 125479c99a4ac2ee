"""HTTP surface: decision intake, review workflow, metrics, and audit reads.

The app is a thin adapter over BiasMonitor and ReviewStore: endpoints
validate the wire payload, call the library, and shape the response. No
fairness arithmetic happens here. Decide responses are acknowledged only
when the backing audit record is durable; otherwise the service answers 503
so the caller knows the decision was not recorded.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from fastapi import Body, Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import ServiceConfig
from .errors import (
    AlreadyResolvedError,
    InstanceError,
    SchemaError,
    StoreError,
    UnknownCaseError,
)
from .models import load_model_file
from .monitor import STATUS_PENDING, BiasMonitor
from .schema import load_schema_file, validate_instance
from .store import FLAGGED_PENDING, ReviewStore, ReviewResolution


@dataclass
class Runtime:
    """Everything the endpoints share; built once at startup."""

    config: ServiceConfig
    monitor: BiasMonitor
    store: ReviewStore
    decision_slots: threading.Semaphore

    def close(self):
        self.store.close()


def build_runtime(config: ServiceConfig) -> Runtime:
    """Load schema, model, and store; any failure here aborts startup."""
    schema = load_schema_file(config.schema_path)
    model = load_model_file(config.model_path, schema)
    store = ReviewStore(config.audit_path)
    monitor = BiasMonitor(config.monitor, model, schema, store)
    return Runtime(
        config=config,
        monitor=monitor,
        store=store,
        decision_slots=threading.Semaphore(config.max_concurrent_decisions),
    )


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="oversight", docs_url=None, redoc_url=None)
    app.state.runtime = runtime
    schema = runtime.monitor.schema

    @app.middleware("http")
    async def cap_request_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None:
            try:
                if int(length) > runtime.config.max_request_bytes:
                    return JSONResponse({"error": "request body too large"}, status_code=413)
            except ValueError:
                return JSONResponse({"error": "bad content-length"}, status_code=400)
        return await call_next(request)

    def require_token(authorization: Optional[str] = Header(default=None)):
        token = runtime.config.auth_token
        if not token:
            _fail(503, "reviewer endpoints disabled: no auth token configured")
        if authorization != f"Bearer {token}":
            _fail(401, "missing or invalid bearer token")

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model_id": runtime.monitor.model.model_id}

    @app.post("/v1/decide")
    def decide(payload: dict = Body(...)):
        features = payload.get("features")
        if not isinstance(features, dict):
            return JSONResponse({"error": "body needs a 'features' object"}, status_code=400)
        try:
            x = validate_instance(schema, features)
        except InstanceError as e:
            return JSONResponse({"error": str(e), "feature": e.feature}, status_code=400)
        with runtime.decision_slots:
            outcome = runtime.monitor.process_decision(x)
        if outcome.audit_seq is None:
            return JSONResponse(
                {"error": outcome.detail or "decision could not be recorded"},
                status_code=503,
            )
        body = {
            "request_id": outcome.request_id,
            "status": outcome.status,
            "flip_fraction": outcome.flip_fraction,
        }
        if outcome.label is not None:
            body["label"] = outcome.label.value
        if outcome.score is not None:
            body["score"] = outcome.score
        if outcome.case_id is not None:
            body["case_id"] = outcome.case_id
            body["case_url"] = f"/v1/cases/{outcome.case_id}"
        if outcome.detail is not None:
            body["detail"] = outcome.detail
        return body

    @app.get("/v1/cases", dependencies=[Depends(require_token)])
    def list_cases(
        after: Optional[str] = Query(default=None),
        limit: int = Query(default=50, ge=1, le=500),
    ):
        cases = runtime.store.list_pending(after=after, limit=limit)
        return {"cases": [_case_summary(c) for c in cases]}

    @app.get("/v1/cases/{case_id}", dependencies=[Depends(require_token)])
    def case_detail(case_id: str):
        try:
            return runtime.store.get_case(case_id)
        except UnknownCaseError as e:
            return JSONResponse({"error": str(e)}, status_code=404)

    @app.post("/v1/cases/{case_id}/resolution", dependencies=[Depends(require_token)])
    def resolve(case_id: str, payload: dict = Body(...)):
        try:
            resolution = ReviewResolution(
                case_id=case_id,
                reviewer_id=payload.get("reviewer_id", ""),
                verdict=payload.get("verdict", ""),
                rationale=payload.get("rationale"),
            )
        except StoreError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        try:
            record = runtime.store.resolve_case(resolution)
        except UnknownCaseError as e:
            return JSONResponse({"error": str(e)}, status_code=404)
        except AlreadyResolvedError as e:
            body = {"error": str(e)}
            if e.record is not None:
                body["record"] = e.record.to_wire()
            return JSONResponse(body, status_code=409)
        except StoreError as e:
            return JSONResponse({"error": str(e)}, status_code=503)
        return {"record": record.to_wire(), "final_label": record.final_label.value}

    @app.get("/v1/decisions/{request_id}")
    def decision(request_id: str):
        record = runtime.store.decision_for(request_id)
        if record is None:
            return JSONResponse({"error": f"unknown request {request_id!r}"}, status_code=404)
        status = STATUS_PENDING if record.outcome == FLAGGED_PENDING else record.outcome
        body = {"request_id": request_id, "status": status, "record": record.to_wire()}
        if record.final_label is not None:
            body["final_label"] = record.final_label.value
        if record.case_id is not None:
            body["case_id"] = record.case_id
        return body

    @app.get("/v1/metrics/groups")
    def group_metrics(feature: str = Query(...)):
        try:
            rates = runtime.monitor.group_rates(feature)
        except SchemaError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        return {
            "feature": rates.feature,
            "groups": {
                value: {"count": rates.counts[value], "positive_rate": rates.rates[value]}
                for value in sorted(rates.counts)
            },
            "disparity": rates.disparity,
            "window": runtime.config.monitor.metrics_window,
        }

    @app.get("/v1/audit", dependencies=[Depends(require_token)])
    def audit(
        from_seq: int = Query(default=1, alias="from", ge=1),
        limit: int = Query(default=100, ge=1, le=1000),
    ):
        records = runtime.store.read_audit(from_seq, limit)
        next_from = records[-1].seq + 1 if records else None
        return {"records": [r.to_wire() for r in records], "next_from": next_from}

    if runtime.config.static_ui_path:
        app.mount(
            "/ui",
            StaticFiles(directory=runtime.config.static_ui_path, html=True),
            name="ui",
        )

    return app


def _case_summary(case: dict) -> dict:
    return {
        "case_id": case["case_id"],
        "request_id": case["request_id"],
        "created": case["created"],
        "model_id": case["model_id"],
        "model_score": case["original"]["score"],
        "model_label": case["original"]["label"],
        "flip_fraction": case["flag"]["flip_fraction"],
        "lambda": case["flag"]["lambda"],
        "truncated": case["flag"]["truncated"],
        "state": case["state"],
    }


def _fail(status_code: int, message: str):
    from fastapi import HTTPException

    raise HTTPException(status_code=status_code, detail=message)


class ExpiryWorker:
    """Daemon loop finalizing overdue pending cases under timeout_default."""

    def __init__(self, monitor: BiasMonitor, interval: float = 1.0):
        self.monitor = monitor
        self.interval = interval
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self._thread.start()

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=5)

    def _run(self):
        while not self._stop.wait(self.interval):
            try:
                self.monitor.expire_overdue()
            except StoreError:
                # Expiry retries next tick; the store surfaces its own state.
                continue
