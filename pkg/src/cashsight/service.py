"""Real-time streaming backend.

One WebSocket endpoint (``/ws``) carries JSON messages both ways; every
message is self-describing via its ``type`` field.  Client -> server:

    {"type": "frame", "seq": n, "ts_ms": t, "jpeg_b64": "..."}
    {"type": "gesture", "kind": "double_tap|triple_tap|long_press", "ts_ms": t}
    {"type": "played", "cls": "100dollar"}

Server -> client:

    {"type": "hello", "session": id, "config": {...timing constants...}}
    {"type": "detections", "seq": n, "boxes": [{"cls", "conf", "xyxy"}],
     "timing_ms": {"pre", "inf", "post", "total"}}
    {"type": "announce", "cls": name, "speech": text}
    {"type": "ledger", "speech": text, "totals": {"usd","eur","eurcent","bdt"}}
    {"type": "dropped", "seq": n}
    {"type": "error", "code": "...", ...}

Detection boxes are reported in the original frame's pixel coordinates.
Each connection owns a session: its own stabilizer, ledger and worker task
consuming messages in arrival order.  If a new frame arrives while an older
one is still queued, the older one is dropped (keep-latest) so live latency
stays bounded.  A double-tap only adds money once the client has confirmed
the announcement was spoken (``played``); until then it is treated as
having no locked currency.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import dataclasses
import itertools
import json
from collections import deque

from aiohttp import WSMsgType, web

from .assist import GESTURE_KINDS, LedgerState, Gesture, StabilizerState, ledger_apply, stabilizer_update
from .config import Config
from .datakit import class_lookup
from .imageio import decode_image_bytes
from .pipeline import DetectionPipeline

_session_counter = itertools.count(1)
_CLOSE = object()

CONFIG_KEY = web.AppKey("config", Config)
PIPELINE_KEY = web.AppKey("pipeline", DetectionPipeline)

TOTALS_KEYS = (("usd", "USD"), ("eur", "EUR"), ("eurcent", "EURCENT"), ("bdt", "BDT"))


class Session:
    """Per-connection state plus the ordered message worker."""

    def __init__(self, ws: web.WebSocketResponse, config: Config, pipeline: DetectionPipeline):
        self.ws = ws
        self.config = config
        self.pipeline = pipeline
        self.session_id = next(_session_counter)
        self.stabilizer = StabilizerState(config=config.assist)
        self.ledger = LedgerState()
        self.played_for: str | None = None
        self.last_seq = -1
        self.timing_totals = {"pre": 0.0, "inf": 0.0, "post": 0.0}
        self._items: deque = deque()
        self._wake = asyncio.Event()

    async def enqueue(self, msg) -> None:
        if isinstance(msg, dict) and msg.get("type") == "frame":
            for queued in list(self._items):
                if isinstance(queued, dict) and queued.get("type") == "frame":
                    self._items.remove(queued)
                    await self._send({"type": "dropped", "seq": queued.get("seq")})
        self._items.append(msg)
        self._wake.set()

    async def close(self) -> None:
        self._items.append(_CLOSE)
        self._wake.set()

    async def run(self) -> None:
        while True:
            while not self._items:
                await self._wake.wait()
                self._wake.clear()
            msg = self._items.popleft()
            if msg is _CLOSE:
                return
            await self._dispatch(msg)

    async def _send(self, payload: dict) -> None:
        if not self.ws.closed:
            await self.ws.send_json(payload)

    async def _dispatch(self, msg) -> None:
        if not isinstance(msg, dict) or "type" not in msg:
            await self._send({"type": "error", "code": "bad_message"})
            return
        kind = msg["type"]
        if kind == "frame":
            await self._handle_frame(msg)
        elif kind == "gesture":
            await self._handle_gesture(msg)
        elif kind == "played":
            self._handle_played(msg)
        else:
            reply = {"type": "error", "code": "bad_type"}
            if "seq" in msg:
                reply["seq"] = msg["seq"]
            await self._send(reply)

    async def _handle_frame(self, msg: dict) -> None:
        seq = msg.get("seq")
        ts = msg.get("ts_ms")
        payload = msg.get("jpeg_b64")
        if not isinstance(seq, int) or not isinstance(ts, (int, float)) or not isinstance(payload, str):
            await self._send({"type": "error", "code": "bad_frame", "seq": seq})
            return
        if seq <= self.last_seq:
            await self._send({"type": "dropped", "seq": seq})
            return
        if len(payload) * 3 // 4 > self.config.server.max_frame_bytes:
            await self._send({"type": "error", "code": "too_large", "seq": seq})
            return
        try:
            raw = base64.b64decode(payload, validate=True)
            frame = decode_image_bytes(raw)
        except (binascii.Error, ValueError):
            await self._send({"type": "error", "code": "bad_frame", "seq": seq})
            return

        result = await asyncio.to_thread(self.pipeline.process, frame)
        self.last_seq = seq
        for stage in self.timing_totals:
            self.timing_totals[stage] += result.timing_ms[stage]

        top = None
        if result.detections:
            best = max(result.detections, key=lambda d: d.confidence)
            top = (best.class_id, best.confidence)
        self.stabilizer, event = stabilizer_update(self.stabilizer, int(ts), top, self.config.speech)
        if not self.stabilizer.locked:
            self.played_for = None
        elif self.played_for is not None and self.played_for != class_lookup(self.stabilizer.candidate_class).name:
            self.played_for = None

        boxes = [
            {
                "cls": class_lookup(d.class_id).name,
                "conf": round(d.confidence, 4),
                "xyxy": [round(v, 2) for v in d.box],
            }
            for d in result.detections
        ]
        await self._send({"type": "detections", "seq": seq, "boxes": boxes, "timing_ms": result.timing_ms})
        if event is not None:
            await self._send(
                {"type": "announce", "cls": class_lookup(self.stabilizer.candidate_class).name, "speech": event.text}
            )

    async def _handle_gesture(self, msg: dict) -> None:
        kind = msg.get("kind")
        if kind not in GESTURE_KINDS:
            await self._send({"type": "error", "code": "bad_gesture"})
            return
        ts = int(msg.get("ts_ms", 0))
        effective = self.stabilizer
        if effective.locked:
            name = class_lookup(effective.candidate_class).name
            if self.played_for != name:
                # announcement not confirmed spoken yet: treat as no lock
                effective = dataclasses.replace(effective, locked=False)
        self.ledger, event = ledger_apply(self.ledger, Gesture(kind, ts), effective, self.config.speech)
        totals = {key: self.ledger.total(group) for key, group in TOTALS_KEYS}
        await self._send({"type": "ledger", "speech": event.text, "totals": totals})

    def _handle_played(self, msg: dict) -> None:
        cls = msg.get("cls")
        if not self.stabilizer.locked or self.stabilizer.candidate_class is None:
            return
        if cls == class_lookup(self.stabilizer.candidate_class).name:
            self.played_for = cls


def _hello(session: Session) -> dict:
    a = session.config.assist
    return {
        "type": "hello",
        "session": session.session_id,
        "config": {
            "assist": dataclasses.asdict(a),
            "speech": dataclasses.asdict(session.config.speech),
        },
    }


async def _ws_handler(request: web.Request) -> web.WebSocketResponse:
    ws = web.WebSocketResponse()
    await ws.prepare(request)
    session = Session(ws, request.app[CONFIG_KEY], request.app[PIPELINE_KEY])
    await ws.send_json(_hello(session))
    worker = asyncio.create_task(session.run())
    try:
        async for msg in ws:
            if msg.type == WSMsgType.TEXT:
                try:
                    data = json.loads(msg.data)
                except json.JSONDecodeError:
                    await ws.send_json({"type": "error", "code": "bad_json"})
                    continue
                await session.enqueue(data)
            elif msg.type in (WSMsgType.ERROR, WSMsgType.CLOSE):
                break
    finally:
        await session.close()
        await worker
    return ws


async def _healthz(_request: web.Request) -> web.Response:
    return web.json_response({"status": "ok"})


def build_app(config: Config | None = None, pipeline: DetectionPipeline | None = None) -> web.Application:
    config = config or Config()
    app = web.Application()
    app[CONFIG_KEY] = config
    app[PIPELINE_KEY] = pipeline or DetectionPipeline(config)
    app.router.add_get("/healthz", _healthz)
    app.router.add_get("/ws", _ws_handler)
    static_dir = config.server.static_dir
    if static_dir:

        async def _index(_request):
            return web.FileResponse(f"{static_dir}/index.html")

        app.router.add_get("/", _index)
        app.router.add_static("/", static_dir)
    return app


def serve(config: Config) -> None:
    app = build_app(config)
    web.run_app(app, host=config.server.host, port=config.server.port)
