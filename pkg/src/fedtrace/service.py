"""HTTP services and clients: the wire between console, registry, and
facilities.

Registry endpoints: POST /signin, POST /case, GET /report/{id}, POST /wipe.
Facility endpoints: POST /exchange, POST /ingest, POST /trace-query.
Bodies are JSON whose field names match the in-process types one-to-one,
authenticated by a shared bearer token per link. Errors come back as
``{"error": {"code", "detail"}}`` with a 4xx/5xx status.
"""

from __future__ import annotations

import json
import time as _time
from typing import Callable, Optional

import httpx
from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import errors as err
from .context import profile_from_dict
from .errors import FedTraceError
from .facility import Facility
from .messages import FacilityQuery, FacilityResponse, SurfaceParams
from .positioning import GatewayReading, ProximityParams
from .registration import Registry
from .trace import (
    TraceRequest,
    hit_from_dict,
    hit_to_dict,
    report_to_dict,
    run_trace,
    trajectory_from_list,
    trajectory_to_list,
)
from .u2u import RawReading

_STATUS_BY_CODE = {
    "invalid_phone": 400,
    "invalid_request": 400,
    "bad_layout": 400,
    "infeasible_plan": 400,
    "unknown_visitor": 404,
    "unknown_badge": 404,
    "unknown_facility": 404,
    "unknown_device": 404,
    "not_signed_in": 404,
    "report_not_found": 404,
    "device_busy": 409,
    "device_pool_exhausted": 409,
    "duplicate_visitor": 409,
    "unsupported_mode": 409,
    "unauthorized": 401,
    "facility_unreachable": 502,
}

_ERROR_BY_CODE = {
    cls.code: cls
    for cls in (
        err.InvalidPhoneError,
        err.InvalidRequestError,
        err.LayoutError,
        err.InfeasiblePlanError,
        err.UnknownVisitorError,
        err.UnknownBadgeError,
        err.UnknownFacilityError,
        err.UnknownDeviceError,
        err.NotSignedInError,
        err.DeviceBusyError,
        err.DevicePoolExhaustedError,
        err.DuplicateVisitorError,
        err.UnsupportedModeError,
        err.FacilityUnreachableError,
    )
}


def _error_response(code: str, detail: str) -> JSONResponse:
    status = _STATUS_BY_CODE.get(code, 400)
    return JSONResponse({"error": {"code": code, "detail": detail}}, status_code=status)


def _install_handlers(app: FastAPI, token: str) -> None:
    @app.exception_handler(FedTraceError)
    def _fedtrace_error(_request: Request, exc: FedTraceError) -> JSONResponse:
        return _error_response(exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    def _validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error_response("invalid_request", str(exc.errors()[:1]))

    @app.middleware("http")
    async def _check_token(request: Request, call_next):
        expected = f"Bearer {token}"
        if request.headers.get("authorization") != expected:
            return _error_response("unauthorized", "missing or wrong bearer token")
        return await call_next(request)


def _field(payload: dict, key: str, kind: Callable, required: bool = True, default=None):
    if key not in payload or payload[key] is None:
        if required:
            raise err.InvalidRequestError(f"missing field: {key}")
        return default
    try:
        return kind(payload[key])
    except (TypeError, ValueError):
        raise err.InvalidRequestError(f"bad value for field: {key}")


# -- wire codecs ---------------------------------------------------------------


def query_to_dict(query: FacilityQuery) -> dict:
    return {
        "request_id": query.request_id,
        "visitor": query.visitor,
        "mode": query.mode,
        "now": query.now,
        "period": list(query.period),
        "params": {"radius": query.params.radius, "window": query.params.window},
        "surface": (
            {"dwell": query.surface.dwell, "lag": query.surface.lag}
            if query.surface is not None
            else None
        ),
        "want_trajectory": query.want_trajectory,
    }


def query_from_dict(data: dict) -> FacilityQuery:
    params = data.get("params") or {}
    surface = data.get("surface")
    return FacilityQuery(
        request_id=str(data["request_id"]),
        visitor=str(data["visitor"]),
        mode=str(data["mode"]),
        now=int(data["now"]),
        period=(int(data["period"][0]), int(data["period"][1])),
        params=ProximityParams(
            radius=float(params.get("radius", 10.0)),
            window=int(params.get("window", 600)),
        ),
        surface=(
            SurfaceParams(int(surface["dwell"]), int(surface["lag"]))
            if surface is not None
            else None
        ),
        want_trajectory=bool(data.get("want_trajectory", True)),
    )


def response_to_dict(response: FacilityResponse) -> dict:
    return {
        "request_id": response.request_id,
        "mode": response.mode,
        "hits": [hit_to_dict(h) for h in response.hits],
        "trajectory": trajectory_to_list(response.trajectory),
        "surface_pairs": [
            {
                "visitor": p.visitor,
                "cell": list(p.cell),
                "patient_leave": p.patient_leave,
                "visitor_arrive": p.visitor_arrive,
            }
            for p in response.surface_pairs
        ],
        "cell_counts": response.cell_counts,
        "diagnostics": dict(sorted(response.diagnostics.items())),
    }


def response_from_dict(data: dict, visitor: str) -> FacilityResponse:
    from .context import SurfacePair

    mode = str(data["mode"])
    return FacilityResponse(
        request_id=str(data["request_id"]),
        mode=mode,
        hits=[hit_from_dict(mode, h) for h in data.get("hits", [])],
        trajectory=trajectory_from_list(visitor, data.get("trajectory")),
        surface_pairs=[
            SurfacePair(
                p["visitor"],
                (int(p["cell"][0]), int(p["cell"][1])),
                int(p["patient_leave"]),
                int(p["visitor_arrive"]),
            )
            for p in data.get("surface_pairs", [])
        ],
        cell_counts=(
            [[int(v) for v in row] for row in data["cell_counts"]]
            if data.get("cell_counts") is not None
            else None
        ),
        diagnostics={k: int(v) for k, v in (data.get("diagnostics") or {}).items()},
    )


# -- facility service ----------------------------------------------------------


def create_facility_app(facility: Facility, token: str) -> FastAPI:
    app = FastAPI(title=f"facility {facility.facility_id}", docs_url=None, redoc_url=None)
    _install_handlers(app, token)

    @app.post("/exchange")
    def exchange(payload: dict = Body(...)):
        time = _field(payload, "time", int)
        if payload.get("return"):
            device = _field(payload, "device", str)
            visitor = facility.hand_back(device, time)
            return {"visitor": visitor, "device": device, "time": time}
        visitor = _field(payload, "visitor", str)
        device = _field(payload, "device", str, required=False)
        assigned = facility.exchange(visitor, device, time)
        return {"visitor": visitor, "device": assigned, "time": time}

    @app.post("/ingest")
    def ingest(payload: dict = Body(...)):
        mode = _field(payload, "mode", str)
        readings = payload.get("readings")
        if not isinstance(readings, list):
            raise err.InvalidRequestError("readings must be a list")
        if mode == "u2u":
            parsed = [
                RawReading(str(r[0]), str(r[1]), int(r[2]), float(r[3])) for r in readings
            ]
            stats = facility.ingest_u2u(parsed)
            return {"stored": stats.events_stored, "dropped": stats.self_sightings_dropped}
        if mode == "location":
            parsed = [
                GatewayReading(str(r[0]), str(r[1]), int(r[2]), float(r[3]))
                for r in readings
            ]
            stats = facility.ingest_location(parsed)
            return {
                "stored": stats.fixes_stored,
                "dropped": stats.unknown_gateway_dropped,
                "no_fix_epochs": stats.no_fix_epochs,
                "degenerate_epochs": stats.degenerate_epochs,
            }
        raise err.InvalidRequestError(f"unknown ingest mode: {mode}")

    @app.post("/trace-query")
    def trace_query(payload: dict = Body(...)):
        try:
            query = query_from_dict(payload)
        except (KeyError, TypeError, ValueError, IndexError):
            raise err.InvalidRequestError("malformed trace query")
        response = facility.answer_trace_query(query)
        return response_to_dict(response)

    return app


# -- registry service ------------------------------------------------------------


def create_registry_app(
    registry: Registry, token: str, cors_origins: Optional[list[str]] = None
) -> FastAPI:
    app = FastAPI(title="registry", docs_url=None, redoc_url=None)
    _install_handlers(app, token)
    # the operator console runs in a browser; CORS must wrap the token
    # check so preflight requests pass (outermost middleware wins)
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins if cors_origins is not None else ["*"],
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["Authorization", "Content-Type"],
    )

    @app.post("/signin")
    def signin(payload: dict = Body(...)):
        facility = _field(payload, "facility", str)
        now = _field(payload, "time", int)
        device = _field(payload, "device", str, required=False)
        badge = _field(payload, "badge", str, required=False)
        if badge is not None:
            assignment = registry.badge_scan(badge, facility, now)
            sms = registry.sms_outbox[-1]
        elif "gov_id" in payload and payload["gov_id"] is not None:
            gov_id = _field(payload, "gov_id", str)
            assignment, sms = registry.sign_in_by_gov_id(gov_id, facility, now, device)
        else:
            phone = _field(payload, "phone", str)
            assignment, sms = registry.sign_in(phone, facility, now, device)
        return {
            "visitor": assignment.visitor,
            "device": assignment.device,
            "facility": assignment.facility,
            "time": assignment.issued_at,
            "sms": {"destination": sms.destination, "body": sms.body, "time": sms.time},
        }

    @app.post("/case")
    def case(payload: dict = Body(...)):
        phone = _field(payload, "phone", str)
        period = payload.get("period")
        if period is None:
            now = _field(payload, "now", int, required=False, default=int(_time.time()))
            period = (now - registry.policy.horizon, now)
        else:
            if not isinstance(period, (list, tuple)) or len(period) != 2:
                raise err.InvalidRequestError("period must be [start, end]")
            period = (int(period[0]), int(period[1]))
        params_raw = payload.get("params") or {}
        params = ProximityParams(
            radius=float(params_raw.get("radius", 10.0)),
            window=int(params_raw.get("window", 600)),
        )
        context = {
            str(fid): profile_from_dict(prof)
            for fid, prof in (payload.get("context") or {}).items()
        }
        request = TraceRequest(patient=phone, period=period, params=params, context=context)
        report = run_trace(registry, request)
        trace_id = registry.next_report_id()
        body = {"trace_id": trace_id, "report": report_to_dict(report)}
        registry.reports[trace_id] = body
        return body

    @app.get("/report/{trace_id}")
    def report(trace_id: str):
        stored = registry.reports.get(trace_id)
        if stored is None:
            return _error_response("report_not_found", f"no such trace: {trace_id}")
        return stored

    @app.post("/wipe")
    def wipe(payload: dict = Body(...)):
        now = _field(payload, "now", int)
        deleted = registry.wipe_expired(now)
        return {"deleted": deleted}

    return app


# -- HTTP facility client --------------------------------------------------------


class HttpFacilityClient:
    """FacilityClient over HTTP(S); also usable against an ASGI test client.

    Every request body is optionally appended to ``capture`` before it is
    sent, which is how the privacy suite audits facility-bound traffic.
    """

    def __init__(
        self,
        client: httpx.Client,
        token: str,
        capture: Optional[list[bytes]] = None,
    ):
        self._client = client
        self._headers = {
            "Authorization": f"Bearer {token}",
            "Content-Type": "application/json",
        }
        self.capture = capture

    def _post(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        if self.capture is not None:
            self.capture.append(body)
        try:
            response = self._client.post(path, content=body, headers=self._headers)
        except httpx.HTTPError as exc:
            raise err.FacilityUnreachableError(f"{path}: {exc}") from exc
        if response.status_code >= 400:
            try:
                info = response.json()["error"]
                code, detail = info["code"], info["detail"]
            except Exception:
                code, detail = "facility_unreachable", f"http {response.status_code}"
            raise _ERROR_BY_CODE.get(code, err.FacilityUnreachableError)(detail)
        return response.json()

    def exchange(self, visitor: str, device: Optional[str], time: int) -> str:
        data = self._post(
            "/exchange", {"visitor": visitor, "device": device, "time": time}
        )
        return str(data["device"])

    def hand_back(self, device: str, time: int) -> str:
        data = self._post("/exchange", {"device": device, "time": time, "return": True})
        return str(data["visitor"])

    def trace_query(self, query: FacilityQuery) -> FacilityResponse:
        data = self._post("/trace-query", query_to_dict(query))
        return response_from_dict(data, query.visitor)

    def ingest_u2u(self, readings) -> dict:
        return self._post(
            "/ingest",
            {
                "mode": "u2u",
                "readings": [[r.observer, r.observed, r.time, r.rssi] for r in readings],
            },
        )

    def ingest_location(self, readings) -> dict:
        return self._post(
            "/ingest",
            {
                "mode": "location",
                "readings": [[r.gateway, r.device, r.time, r.rssi] for r in readings],
            },
        )
