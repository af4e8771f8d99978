"""Scenario scripts: scripted runs of the control loop with CSV logging.

A :class:`ScenarioScript` is a declarative description of one run: a
waypoint timeline for the servo, an optional mode schedule and hand-target
timeline, fault injections (sensor blackouts, cogging-model gain error),
and a duration.  :func:`run_scenario` executes it tick by tick, writes one
CSV row per tick, and returns a :class:`SummaryReport`.

The CSV holds only quantities that are a deterministic function of the
seed, so two runs with the same seed produce byte-identical files; the
wall-clock tick timings (which are not deterministic) are reported in the
summary instead.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..control import (ControlContext, HapticInteraction, MotionControl,
                       TickRecord, TrajectorySetpoint, control_tick)
from ..geometry import (Pose, quat_conjugate, quat_from_rotvec,
                        quat_multiply, quat_to_rotvec)
from ..haptics import Scene, VirtualTool, load_scene, scene_from_dict
from ..plant import HandModel
from .config import Config, build_context

CSV_COLUMNS = (
    ["t"]
    + ["true_px", "true_py", "true_pz",
       "true_qw", "true_qx", "true_qy", "true_qz"]
    + ["est_px", "est_py", "est_pz", "est_qw", "est_qx", "est_qy", "est_qz"]
    + ["twist_vx", "twist_vy", "twist_vz", "twist_wx", "twist_wy", "twist_wz"]
    + ["wrench_fx", "wrench_fy", "wrench_fz",
       "wrench_tx", "wrench_ty", "wrench_tz"]
    + [f"current_{k:02d}" for k in range(12)]
    + ["saturated", "contacts", "valid_measurements", "estimator_failure",
       "safe_stopped"]
)

SETTLE_TOLERANCE = 1.0e-4  # m, position band used for the settling time


class ScenarioError(ValueError):
    """Raised for malformed scenario scripts."""


@dataclass(frozen=True)
class Waypoint:
    """Servo target reached by a smooth ramp starting at ``time``."""

    time: float
    position: tuple
    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)
    ramp: float = 0.5           # s, smoothstep blend from the prior waypoint

    def pose(self) -> Pose:
        return Pose(np.array(self.position, dtype=float),
                    np.array(self.quaternion, dtype=float))


@dataclass(frozen=True)
class ModeEvent:
    time: float
    mode: str                   # "motion" | "haptic"


@dataclass(frozen=True)
class HandTargetEvent:
    time: float
    position: tuple
    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Blackout:
    start: float
    end: float


@dataclass(frozen=True)
class ScenarioScript:
    duration: float = 2.0
    start_position: tuple = (0.0, 0.0, 0.025)
    waypoints: tuple = ()
    modes: tuple = ()
    hand_targets: tuple = ()
    blackouts: tuple = ()
    cogging_gain: float = 1.0
    scene: object = None        # path or inline dict for haptic segments
    expect_safe_stop: bool = False

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        for name in ("waypoints", "modes", "hand_targets", "blackouts"):
            events = getattr(self, name)
            times = [e.time if name != "blackouts" else e.start
                     for e in events]
            if any(b < a for a, b in zip(times, times[1:])):
                raise ScenarioError(f"{name} must be time-ordered")
        for bo in self.blackouts:
            if bo.end <= bo.start:
                raise ScenarioError("blackout end must follow its start")
        for ev in self.modes:
            if ev.mode not in ("motion", "haptic"):
                raise ScenarioError(f"unknown mode '{ev.mode}'")


def script_from_dict(data: dict) -> ScenarioScript:
    """Build a script from parsed JSON, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be an object")
    known = {f.name for f in dataclasses.fields(ScenarioScript)}
    for key in data:
        if key not in known:
            raise ScenarioError(f"unknown key '{key}'")

    def build(cls, items, name):
        fields = {f.name for f in dataclasses.fields(cls)}
        out = []
        for item in items:
            for key in item:
                if key not in fields:
                    raise ScenarioError(f"unknown key '{name}.{key}'")
            out.append(cls(**{k: tuple(v) if isinstance(v, list) else v
                              for k, v in item.items()}))
        return tuple(out)

    kwargs = dict(data)
    if "start_position" in kwargs:
        kwargs["start_position"] = tuple(kwargs["start_position"])
    kwargs["waypoints"] = build(Waypoint, data.get("waypoints", ()),
                                "waypoints")
    kwargs["modes"] = build(ModeEvent, data.get("modes", ()), "modes")
    kwargs["hand_targets"] = build(HandTargetEvent,
                                   data.get("hand_targets", ()),
                                   "hand_targets")
    kwargs["blackouts"] = build(Blackout, data.get("blackouts", ()),
                                "blackouts")
    return ScenarioScript(**kwargs)


def load_script(path) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"parse error in {path} at line {exc.lineno},"
                f" column {exc.colno}: {exc.msg}") from exc
    return script_from_dict(data)


def _smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _quat_interp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Geodesic interpolation along the relative rotation vector."""
    rv = quat_to_rotvec(quat_multiply(q1, quat_conjugate(q0)))
    return quat_multiply(quat_from_rotvec(u * rv), q0)


def waypoint_trajectory(start: Pose, waypoints) -> object:
    """t -> TrajectorySetpoint through smoothstep ramps between waypoints.

    Each waypoint blends from the previous target over its ramp duration;
    between ramps the target holds still, so steady-state error can be
    read at the waypoint itself.
    """
    legs = []
    prev = start
    for wp in waypoints:
        target = wp.pose()
        legs.append((wp.time, max(wp.ramp, 1e-9), prev, target))
        prev = target

    def trajectory(t: float) -> TrajectorySetpoint:
        pose = start
        for t0, ramp, p0, p1 in legs:
            if t < t0:
                break
            u = _smoothstep((t - t0) / ramp)
            pos = p0.position + u * (p1.position - p0.position)
            quat = _quat_interp(p0.quaternion, p1.quaternion, u)
            pose = Pose(pos, quat)
        return TrajectorySetpoint(pose)

    return trajectory


@dataclass
class SummaryReport:
    ticks: int
    duration: float
    rate_hz: float
    final_position_error: float
    max_position_error: float
    settling_time: float | None
    saturation_fraction: float
    estimator_failures: int
    safe_stopped: bool
    expect_safe_stop: bool
    mean_tick_s: float
    p99_tick_s: float
    max_tick_s: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _format(value: float) -> str:
    return format(float(value), ".17g")


def _csv_row(rec: TickRecord) -> str:
    values = ([rec.time]
              + list(rec.truth_position) + list(rec.truth_quaternion)
              + list(rec.est_position) + list(rec.est_quaternion)
              + list(rec.twist_linear) + list(rec.twist_angular)
              + list(rec.commanded_wrench) + list(rec.currents))
    cells = [_format(v) for v in values]
    cells += [str(int(rec.saturated)), str(rec.contact_count),
              str(rec.valid_measurements), str(int(rec.estimator_failure)),
              str(int(rec.safe_stopped))]
    return ",".join(cells)


def apply_script(ctx: ControlContext, script: ScenarioScript) -> object:
    """Configure the context for the script; returns the target-pose lookup."""
    start_pose = Pose(np.array(script.start_position, dtype=float))
    trajectory = waypoint_trajectory(start_pose, script.waypoints)
    ctx.trajectory = trajectory
    ctx.cogging_gain = script.cogging_gain
    if script.blackouts:
        windows = [(b.start, b.end) for b in script.blackouts]
        dt = ctx.timing.dt

        def blackout(tick: int) -> bool:
            t = tick * dt
            return any(a <= t < b for a, b in windows)

        ctx.blackout = blackout
    if script.scene is not None:
        ctx.scene = (scene_from_dict(script.scene)
                     if isinstance(script.scene, dict)
                     else load_scene(script.scene))
        ctx.tool = VirtualTool()
    return trajectory


def run_scenario(config: Config, script: ScenarioScript, out_dir,
                 grid=None) -> SummaryReport:
    """Execute the script, write ``ticks.csv`` and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = build_context(config, grid=grid,
                        start_position=script.start_position)
    trajectory = apply_script(ctx, script)

    mode_events = list(script.modes)
    hand_events = list(script.hand_targets)
    n_ticks = int(round(script.duration * ctx.timing.rate_hz))
    errors = np.empty(n_ticks)
    saturated = 0
    failures = 0

    with open(out / "ticks.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for k in range(n_ticks):
            t = k * ctx.timing.dt
            while mode_events and mode_events[0].time <= t:
                ev = mode_events.pop(0)
                if ev.mode == "haptic":
                    if ctx.scene is None:
                        ctx.scene = Scene([])
                    ctx.mode = HapticInteraction()
                else:
                    ctx.mode = MotionControl()
            while hand_events and hand_events[0].time <= t:
                ev = hand_events.pop(0)
                pose = Pose(np.array(ev.position, dtype=float),
                            np.array(ev.quaternion, dtype=float))
                if ctx.hand is None:
                    ctx.hand = HandModel(pose)
                else:
                    ctx.hand.target = pose
            rec = control_tick(ctx)
            fh.write(_csv_row(rec) + "\n")
            target = trajectory(t).pose
            errors[k] = float(np.linalg.norm(rec.truth_position
                                             - target.position))
            saturated += rec.saturated
            failures += rec.estimator_failure

    # settling time: first instant after which the position error stays
    # inside the tolerance band for the remainder of the run
    settle = None
    if n_ticks and errors[-1] <= SETTLE_TOLERANCE:
        outside = np.nonzero(errors > SETTLE_TOLERANCE)[0]
        last = int(outside[-1]) + 1 if outside.size else 0
        settle = last * ctx.timing.dt

    report = SummaryReport(
        ticks=n_ticks,
        duration=script.duration,
        rate_hz=ctx.timing.rate_hz,
        final_position_error=float(errors[-1]) if n_ticks else 0.0,
        max_position_error=float(errors.max()) if n_ticks else 0.0,
        settling_time=settle,
        saturation_fraction=saturated / n_ticks if n_ticks else 0.0,
        estimator_failures=failures,
        safe_stopped=ctx.safe_stopped,
        expect_safe_stop=script.expect_safe_stop,
        mean_tick_s=ctx.timing.mean(),
        p99_tick_s=ctx.timing.percentile(99.0),
        max_tick_s=max(ctx.timing.durations, default=0.0))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    return report
