"""Operator HTTP + WebSocket surface over the gateway.

The API is a view over MQTT, not a second source of truth: reads come
from the gateway's registry and telemetry store, mutations are the same
calls the MQTT command path uses, and the event stream is fed from the
broker's bridge-topic publishes. Serving the dashboard's static files is
optional and decoupled (the frontend only consumes this HTTP/WS
contract).
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Query, Response, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .gateway import Gateway, InvalidName, NameTaken, UnknownDevice
from .install_code import credential_record, parse_qr_payload
from .telemetry import TelemetryStore, UnknownSeries
from .zigbee_sim import DurationOutOfRange

__all__ = ["ApiEventHub", "create_api"]

API_EVENT_TYPES = ("device_joined", "device_left", "state", "bridge_state", "log", "metric")


class ApiEventHub:
    """Fan-out of bridge-topic publishes to websocket subscriber queues.

    Pushes may come from whatever thread drives the gateway; delivery
    hops onto each subscriber's event loop via call_soon_threadsafe.
    """

    def __init__(self, gateway: Gateway) -> None:
        self.gateway = gateway
        self._subscribers: list[tuple[asyncio.Queue, asyncio.AbstractEventLoop]] = []
        base = gateway.topics.base
        gateway.broker.subscribe_internal(f"{base}/#", self._on_publish)

    def attach(self, queue: asyncio.Queue, loop: asyncio.AbstractEventLoop) -> None:
        self._subscribers.append((queue, loop))

    def detach(self, queue: asyncio.Queue) -> None:
        self._subscribers = [(q, l) for q, l in self._subscribers if q is not queue]

    def _on_publish(self, topic: str, payload: bytes, qos: int, retain: bool) -> None:
        event = self._to_event(topic, payload)
        if event is None:
            return
        for queue, loop in self._subscribers:
            loop.call_soon_threadsafe(queue.put_nowait, event)

    def _to_event(self, topic: str, payload: bytes) -> dict[str, Any] | None:
        if not payload:
            return None  # retained-clear publishes carry no state
        base = self.gateway.topics.base
        levels = topic.split("/")
        if levels[0] != base or len(levels) < 2:
            return None
        try:
            body = json.loads(payload)
        except ValueError:
            return None
        t = self.gateway.network.clock
        if levels[1] == "bridge" and len(levels) == 3:
            kind = levels[2]
            if kind == "state":
                return {"type": "bridge_state", "body": body, "t": t}
            if kind == "metric":
                return {"type": "metric", "body": body, "t": t}
            if kind == "log":
                return {"type": "log", "body": body, "t": t}
            if kind == "event":
                event_type = body.get("type")
                if event_type in ("device_joined", "device_left"):
                    return {"type": event_type, "body": body, "t": t}
                return {"type": "log", "body": body, "t": t}
            return None
        if len(levels) == 2:
            return {
                "type": "state",
                "body": {"friendly_name": levels[1], "state": body},
                "t": t,
            }
        return None  # /set and /set/result are request traffic, not events


class PermitJoinBody(BaseModel):
    duration_s: float


class RenameBody(BaseModel):
    new: str


def create_api(
    gateway: Gateway,
    telemetry: TelemetryStore,
    *,
    heartbeat_s: float = 15.0,
    dashboard_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="zbgw", version="0.1.0", description="smart-building edge gateway API")
    hub = ApiEventHub(gateway)
    app.state.hub = hub

    @app.get("/api/devices")
    def devices() -> list[dict]:
        return gateway.device_views()

    @app.post("/api/permit_join", status_code=204)
    def permit_join(body: PermitJoinBody) -> Response:
        try:
            gateway.permit_join_request(body.duration_s)
        except DurationOutOfRange as exc:
            raise HTTPException(400, detail={"error": exc.code, "reason": str(exc)})
        return Response(status_code=204)

    @app.post("/api/devices/{name}/set", status_code=202)
    def set_values(name: str, values: dict[str, Any]) -> dict:
        result = gateway.execute_command(name, values)
        if result["status"] == "error":
            errors = result.get("errors", {})
            if any("UnknownDevice" in v for v in errors.values()):
                raise HTTPException(404, detail={"error": "UnknownDevice", "reason": name})
            raise HTTPException(422, detail={"error": "CommandFailed", "errors": errors})
        return {"transaction": result["transaction"], "status": result["status"]}

    @app.post("/api/devices/{name}/rename", status_code=204)
    def rename(name: str, body: RenameBody) -> Response:
        try:
            gateway.rename_device(name, body.new)
        except UnknownDevice as exc:
            raise HTTPException(404, detail={"error": exc.code, "reason": str(exc)})
        except NameTaken as exc:
            raise HTTPException(409, detail={"error": exc.code, "reason": str(exc)})
        except InvalidName as exc:
            raise HTTPException(422, detail={"error": exc.code, "reason": str(exc)})
        return Response(status_code=204)

    @app.get("/api/metrics/{series}")
    def metrics(
        series: str,
        from_t: float = Query(0.0, alias="from"),
        to_t: float = Query(float("inf"), alias="to"),
    ) -> list[dict]:
        try:
            samples = telemetry.query(series, from_t, to_t)
        except UnknownSeries as exc:
            raise HTTPException(404, detail={"error": exc.code, "reason": str(exc)})
        return [{"t": s.t, "value": s.value} for s in samples]

    @app.get("/api/metrics/{series}/hourly")
    def metrics_hourly(
        series: str,
        from_t: float = Query(0.0, alias="from"),
        to_t: float = Query(float("inf"), alias="to"),
    ) -> list[dict]:
        if to_t == float("inf"):
            to_t = gateway.network.clock
        try:
            buckets = telemetry.hourly_count(series, from_t, to_t)
        except UnknownSeries as exc:
            raise HTTPException(404, detail={"error": exc.code, "reason": str(exc)})
        return [{"hour": h, "count": c} for h, c in buckets]

    @app.get("/api/credentials/parse")
    def parse_credential(qr: str = Query("")) -> dict:
        try:
            return credential_record(parse_qr_payload(qr))
        except Exception as exc:
            code = getattr(exc, "code", type(exc).__name__)
            raise HTTPException(422, detail={"error": code, "reason": str(exc)})

    @app.websocket("/api/events")
    async def events(ws: WebSocket) -> None:
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        hub.attach(queue, asyncio.get_running_loop())
        try:
            while True:
                try:
                    event = await asyncio.wait_for(queue.get(), timeout=heartbeat_s)
                except asyncio.TimeoutError:
                    event = {"type": "heartbeat", "body": {}, "t": gateway.network.clock}
                await ws.send_text(json.dumps(event))
        except WebSocketDisconnect:
            pass
        finally:
            hub.detach(queue)

    if dashboard_dir and Path(dashboard_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(dashboard_dir), html=True), name="dashboard")

    return app
