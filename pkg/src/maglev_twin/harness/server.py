"""Telemetry/command service exposing a live simulation over WebSocket.

One background thread owns all mutable simulation state and runs the
control loop; network handlers talk to it only through a bounded command
queue (in) and immutable JSON frame snapshots (out).  Telemetry frames
are decimated to ~60 Hz of simulated time.  Each connected client is sent
only the latest snapshot, so a lagging client drops frames rather than
delaying the loop, and every client observes the same sequence numbers.

Wire protocol (JSON text frames):
  telemetry  {type, seq, t, pose[7], est_pose[7], wrench[6], currents[12],
              contacts[...], mode, ...}
  commands   set_hand_target {pose[7]}, set_mode {mode}, load_scene
             {path | scene}, set_gains {kp[6], kd[6]}, pause, resume
  errors     {type:"error", reason}
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading
import time
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..control import (ControllerGains, HapticInteraction, MotionControl,
                       TickRecord, control_tick, hold_setpoint)
from ..geometry import Pose
from ..haptics import (Scene, SceneFormatError, VirtualTool, load_scene,
                       scene_from_dict)
from ..plant import HandModel
from .config import Config, build_context

TELEMETRY_HZ = 60.0
COMMAND_QUEUE_SIZE = 256


class CommandError(ValueError):
    """Raised for syntactically valid JSON that is not a valid command."""


def _check_vector(msg: dict, key: str, length: int) -> np.ndarray:
    value = msg.get(key)
    if (not isinstance(value, list) or len(value) != length
            or not all(isinstance(v, (int, float))
                       and not isinstance(v, bool) for v in value)):
        raise CommandError(f"'{key}' must be a list of {length} numbers")
    vec = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise CommandError(f"'{key}' must be finite")
    return vec


class SimulationService:
    """Runs the control loop on its own thread and publishes snapshots."""

    def __init__(self, config: Config, grid=None, realtime: bool = True):
        self.ctx = build_context(config, grid=grid)
        self.realtime = realtime
        self._commands = queue.Queue(maxsize=COMMAND_QUEUE_SIZE)
        self._lock = threading.Lock()
        self._payload: str | None = None
        self._seq = -1
        self._stop = threading.Event()
        self._paused = False
        self._target_seq = 0
        self._hand_target = None
        dt_frame = 1.0 / TELEMETRY_HZ
        self._decimation = max(1, round(dt_frame * self.ctx.timing.rate_hz))
        self._thread: threading.Thread | None = None

    # -- client-facing ----------------------------------------------------

    def submit(self, msg: dict) -> None:
        """Validate a command and enqueue it for the next tick boundary."""
        if not isinstance(msg, dict):
            raise CommandError("command must be a JSON object")
        kind = msg.get("type")
        if kind == "set_hand_target":
            pose = _check_vector(msg, "pose", 7)
            apply = lambda: self._apply_hand_target(pose)
        elif kind == "set_mode":
            mode = msg.get("mode")
            if mode not in ("motion", "haptic"):
                raise CommandError("'mode' must be 'motion' or 'haptic'")
            apply = lambda: self._apply_mode(mode)
        elif kind == "load_scene":
            scene = self._parse_scene(msg)
            apply = lambda: self._apply_scene(scene)
        elif kind == "set_gains":
            kp = _check_vector(msg, "kp", 6)
            kd = _check_vector(msg, "kd", 6)
            if np.any(kp < 0) or np.any(kd < 0):
                raise CommandError("gains must be non-negative")
            apply = lambda: self._apply_gains(kp, kd)
        elif kind == "pause":
            apply = self._apply_pause
        elif kind == "resume":
            apply = self._apply_resume
        else:
            raise CommandError(f"unknown command type {kind!r}")
        try:
            self._commands.put_nowait(apply)
        except queue.Full:
            raise CommandError("command queue full") from None

    def latest(self) -> tuple:
        """Latest (seq, JSON payload); payload is None before first frame."""
        with self._lock:
            return self._seq, self._payload

    # -- command application (simulation thread only) ----------------------

    def _parse_scene(self, msg: dict):
        if "scene" in msg:
            data = msg["scene"]
            if not isinstance(data, dict):
                raise CommandError("'scene' must be an object")
            try:
                return scene_from_dict(data)
            except SceneFormatError as exc:
                raise CommandError(f"bad scene: {exc}") from exc
        if "path" in msg:
            try:
                return load_scene(msg["path"])
            except (OSError, SceneFormatError, ValueError) as exc:
                raise CommandError(f"bad scene: {exc}") from exc
        raise CommandError("load_scene needs 'path' or 'scene'")

    def _apply_hand_target(self, pose_vec: np.ndarray) -> None:
        pose = Pose(pose_vec[:3].copy(), pose_vec[3:].copy())
        self.ctx.trajectory = hold_setpoint(pose)
        if self.ctx.hand is not None:
            self.ctx.hand.target = pose
        self._hand_target = pose_vec.copy()
        self._target_seq += 1

    def _apply_mode(self, mode: str) -> None:
        if mode == "haptic":
            if self.ctx.scene is None:
                self.ctx.scene = Scene([])      # empty until load_scene
            self.ctx.mode = HapticInteraction()
        else:
            self.ctx.mode = MotionControl()

    def _apply_scene(self, scene) -> None:
        self.ctx.scene = scene
        if self.ctx.tool is None:
            self.ctx.tool = VirtualTool()

    def _apply_gains(self, kp: np.ndarray, kd: np.ndarray) -> None:
        self.ctx.gains = ControllerGains(kp, kd)

    def _apply_pause(self) -> None:
        self._paused = True

    def _apply_resume(self) -> None:
        self._paused = False

    # -- loop ---------------------------------------------------------------

    def _frame(self, rec: TickRecord, seq: int) -> dict:
        mode = ("haptic" if isinstance(self.ctx.mode, HapticInteraction)
                else "motion")
        target = (list(self._hand_target)
                  if self._hand_target is not None else None)
        return {
            "type": "telemetry",
            "seq": seq,
            "t": rec.time,
            "pose": list(rec.truth_position) + list(rec.truth_quaternion),
            "est_pose": list(rec.est_position) + list(rec.est_quaternion),
            "wrench": list(rec.commanded_wrench),
            "currents": list(rec.currents),
            "contacts": [{"id": k} for k in range(rec.contact_count)],
            "mode": mode,
            "tick": rec.tick,
            "saturated": bool(rec.saturated),
            "safe_stopped": bool(rec.safe_stopped),
            "target_seq": self._target_seq,
            "hand_target": target,
        }

    def _publish(self, rec: TickRecord) -> None:
        with self._lock:
            seq = self._seq + 1
            payload = json.dumps(self._frame(rec, seq))
            self._seq = seq
            self._payload = payload

    def _drain_commands(self) -> None:
        while True:
            try:
                apply = self._commands.get_nowait()
            except queue.Empty:
                return
            apply()

    def _loop(self) -> None:
        dt = self.ctx.timing.dt
        next_deadline = time.perf_counter() + dt
        while not self._stop.is_set():
            self._drain_commands()
            if self._paused:
                time.sleep(0.001)
                next_deadline = time.perf_counter() + dt
                continue
            rec = control_tick(self.ctx)
            if rec.tick % self._decimation == 0:
                self._publish(rec)
            if self.realtime:
                delay = next_deadline - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
                next_deadline += dt
            elif rec.tick % 64 == 0:
                time.sleep(0)   # let network handlers run

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


def create_app(config: Config, grid=None, realtime: bool = True) -> FastAPI:
    """FastAPI app exposing the telemetry/command WebSocket at /ws."""
    service = SimulationService(config, grid=grid, realtime=realtime)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        service.start()
        try:
            yield
        finally:
            service.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.service = service

    @app.get("/")
    def health():
        seq, _ = service.latest()
        return {"status": "ok", "seq": seq}

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        send_lock = asyncio.Lock()

        async def send(text: str) -> None:
            async with send_lock:
                await ws.send_text(text)

        async def sender():
            last = -1
            while True:
                seq, payload = service.latest()
                if payload is not None and seq != last:
                    await send(payload)
                    last = seq
                await asyncio.sleep(1.0 / (4.0 * TELEMETRY_HZ))

        async def receiver():
            while True:
                text = await ws.receive_text()
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError:
                    await send(json.dumps({"type": "error",
                                           "reason": "malformed JSON"}))
                    continue
                try:
                    service.submit(msg)
                except CommandError as exc:
                    await send(json.dumps({"type": "error",
                                           "reason": str(exc)}))

        send_task = asyncio.ensure_future(sender())
        try:
            await receiver()
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()

    return app


def serve(config: Config, port: int, host: str = "127.0.0.1",
          grid=None) -> None:
    """Run the telemetry service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config, grid=grid), host=host, port=port,
                log_level="warning")
