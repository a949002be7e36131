"""WebSocket teleoperation server around the live filter + simulator loop.

Three roles, per the concurrency model of the CLI/server component:

* control loop — a daemon thread with exclusive ownership of the simulator
  and filter state, ticking at the scenario period (100 Hz default);
* network endpoint — the FastAPI websocket handler, which only parses
  messages and writes them into a single-slot command mailbox;
* a latest-state-wins frame slot between them, drained by a 30 Hz sender.

The control loop never touches the socket, so a slow or absent client cannot
stall it; operator commands older than 200 ms decay to a zero twist.

Wire protocol (JSON text frames):

* client -> server: ``{"type": "jog", "twist": [vx,vy,vz,wx,wy,wz], "seq": n}``,
  ``{"type": "reset"}``, ``{"type": "set_filter", "on": bool}``
* server -> client: ``{"type": "state", ...}`` (see :meth:`TeleopServer._frame`)
  and ``{"type": "error", "msg": str}``
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from collections import deque
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .filter import SafetyFilter
from .harness import Scenario, _clip, _dls, load_scenario
from .kinematics import ee_jacobian, forward_kinematics
from .so3 import log_so3

__all__ = ["TeleopServer", "create_app", "serve"]

STALE_COMMAND_S = 0.2
BROADCAST_HZ = 30.0


def _pose_dict(pose) -> dict:
    return {"t": [float(v) for v in pose.t],
            "aa": [float(v) for v in log_so3(pose.R)]}


class TeleopServer:
    """Simulator + filter control loop with a command mailbox and frame slot."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.model = scenario.model
        self.filter = SafetyFilter(self.model, scenario.filter_config())
        self.period = scenario.period
        self._lock = threading.Lock()
        self._cmd_twist = np.zeros(6)
        self._cmd_seq: int | None = None
        self._cmd_stamp: float | None = None
        self._filter_on = True
        self._reset_requested = False
        self._client_claimed = False
        self.latest_frame: dict | None = None
        self.cycle_log: list[dict] = []
        self.cycle_ms: deque = deque(maxlen=2000)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.t = 0.0
        self.q = np.array(scenario.q0, dtype=float)

    # -- network-side entry points ------------------------------------------

    def claim(self) -> bool:
        with self._lock:
            if self._client_claimed:
                return False
            self._client_claimed = True
            return True

    def release(self) -> None:
        with self._lock:
            self._client_claimed = False
            # disconnect: drop to a zero-twist hold immediately
            self._cmd_twist = np.zeros(6)
            self._cmd_stamp = None

    def handle(self, doc: dict) -> None:
        """Apply one client message; raises ValueError on malformed input."""
        kind = doc.get("type")
        if kind == "jog":
            twist = np.asarray(doc["twist"], dtype=float)
            if twist.shape != (6,) or not np.all(np.isfinite(twist)):
                raise ValueError("jog twist must be 6 finite numbers")
            seq = doc.get("seq")
            with self._lock:
                self._cmd_twist = twist
                self._cmd_seq = None if seq is None else int(seq)
                self._cmd_stamp = time.monotonic()
        elif kind == "reset":
            with self._lock:
                self._reset_requested = True
        elif kind == "set_filter":
            on = doc.get("on")
            if not isinstance(on, bool):
                raise ValueError("set_filter requires a boolean 'on'")
            with self._lock:
                self._filter_on = on
        else:
            raise ValueError(f"unknown message type {kind!r}")

    # -- control loop ---------------------------------------------------------

    def start(self) -> None:
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _loop(self) -> None:
        next_tick = time.monotonic()
        while not self._stop.is_set():
            t0 = time.perf_counter()
            self._tick()
            self.cycle_ms.append((time.perf_counter() - t0) * 1e3)
            next_tick += self.period
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_tick = time.monotonic()  # overrun: don't accumulate debt

    def _tick(self) -> None:
        with self._lock:
            twist_ee = self._cmd_twist.copy()
            seq = self._cmd_seq
            stamp = self._cmd_stamp
            filter_on = self._filter_on
            do_reset = self._reset_requested
            self._reset_requested = False
        if do_reset:
            self.t = 0.0
            self.q = np.array(self.scenario.q0, dtype=float)
            self.filter.reset()
        if stamp is None or time.monotonic() - stamp > STALE_COMMAND_S:
            twist_ee = np.zeros(6)

        links, _ = forward_kinematics(self.model, self.q)
        ee_pose = links[-1] @ self.model.ee_offset
        # operator jogs are EE-frame twists; rotate into the world frame
        twist_w = np.concatenate([ee_pose.R @ twist_ee[:3],
                                  ee_pose.R @ twist_ee[3:]])
        u_nominal = _clip(_dls(ee_jacobian(self.model, self.q), twist_w),
                          self.model)

        obstacles = [o.state(self.t) for o in self.scenario.obstacles]
        result = self.filter.step(self.q, obstacles, u_nominal)
        if filter_on:
            u = result.u_star
        else:
            u = u_nominal
            self.filter.u_prev = u_nominal.copy()
        self.q = self.q + u * self.period
        self.t += self.period

        frame = self._frame(ee_pose, u_nominal, u, result, obstacles,
                            seq, filter_on)
        with self._lock:
            self.latest_frame = frame
            self.cycle_log.append(frame)

    def _frame(self, ee_pose, u_nominal, u, result, obstacles, seq,
               filter_on) -> dict:
        barrier = [r.h for r in result.rows if r.kind in ("env", "self")]
        h_min = min(barrier) if barrier else None
        d_min = min(result.d_min.values())
        if not np.isfinite(d_min):
            d_min = None
        return {
            "type": "state",
            "t": round(self.t, 9),
            "q": [float(v) for v in self.q],
            "ee_pose": _pose_dict(ee_pose),
            "u_nominal": [float(v) for v in u_nominal],
            "u_filtered": [float(v) for v in u],
            "h_min": h_min,
            "d_min": None if d_min is None else float(d_min),
            "mu": float(result.mu),
            "status": result.status,
            "filter_on": filter_on,
            "seq": seq,
            "obstacles": [
                {**obs.sq.to_dict(), "pose": _pose_dict(obs.pose)}
                for obs in obstacles
            ],
            "robot_sqs": [
                {**att.sq.to_dict(), "pose": _pose_dict(pose)}
                for att, pose in zip(
                    self.model.attachments,
                    forward_kinematics(self.model, self.q)[1])
            ],
        }


def create_app(scenario: Scenario) -> FastAPI:
    server = TeleopServer(scenario)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        server.start()
        yield
        server.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.teleop = server

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        if not server.claim():
            await websocket.send_json({"type": "error",
                                       "msg": "session occupied"})
            await websocket.close()
            return
        sender = asyncio.create_task(_broadcast(websocket, server))
        try:
            while True:
                text = await websocket.receive_text()
                try:
                    server.handle(json.loads(text))
                except (ValueError, KeyError, TypeError) as exc:
                    await websocket.send_json(
                        {"type": "error", "msg": f"rejected: {exc}"})
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            server.release()

    return app


async def _broadcast(websocket: WebSocket, server: TeleopServer) -> None:
    """Send the most recent state frame at the broadcast rate (latest wins)."""
    last_t = None
    while True:
        with server._lock:
            frame = server.latest_frame
        if frame is not None and frame["t"] != last_t:
            last_t = frame["t"]
            await websocket.send_text(json.dumps(frame))
        await asyncio.sleep(1.0 / BROADCAST_HZ)


def serve(scenario_path, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    scenario = load_scenario(Path(scenario_path))
    uvicorn.run(create_app(scenario), host=host, port=port)
