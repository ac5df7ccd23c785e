"""Closed-loop simulation: render, detect, track, decide, control, move.

One call to :func:`run_closed_loop` flies a mission at a fixed control
rate and returns a :class:`Trace` holding one record per frame plus a
summary. Every random draw is derived from the run seed and the frame
index, so equal seeds give byte-identical traces (see
:attr:`Trace.digest`).
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .._validation import InvalidInputError
from ..control import (Controller, ControllerConfig, ErrorVector, LostLineError,
                       clip_command, compute_errors, correct_offset)
from ..detectors import DEFAULT_LINE_RANGE, detect_with_skeleton, make_detector
from ..lines import LineClass
from ..strategy import (FrameInfo, MissionPlan, ModeKind, Phase, StrategyConfig,
                        initial_state, plan_mission, strategy_step)
from ..threshold import LineSegmenter
from ..tracking import LineTracker, Turn, detect_nodes, detect_turn
from .camera import CameraIntrinsics, PerturbConfig, Pose, render_camera
from .dynamics import DynamicsParams, step_dynamics

__all__ = ["PipelineConfig", "Trace", "run_closed_loop", "frame_seed", "line_crossings"]


def frame_seed(seed, frame):
    """Per-frame seed derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(frame)]).generate_state(1)[0])


@dataclass
class PipelineConfig:
    """Everything the loop needs besides the world and the mission plan."""

    method: str = "combined"
    width: int = 480
    height: int = 270
    altitude: float = 2.0
    rate_hz: float = 20.0
    max_time: float = 600.0
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    tracker_q: float = 0.5
    tracker_r: float = 9.0
    ascend_rate: float = 0.25
    turn_ratio: float = 4.0
    correct_tilt: bool = True
    start: str = "mission"  # "mission" or "hover"

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        sub = {
            "perturb": PerturbConfig.from_dict(d.pop("perturb", None)),
            "controller": ControllerConfig.from_dict(d.pop("controller", None) or {}),
            "strategy": StrategyConfig.from_dict(d.pop("strategy", None)),
            "dynamics": DynamicsParams.from_dict(d.pop("dynamics", None)),
        }
        return cls(**d, **sub)

    def to_dict(self):
        from dataclasses import asdict
        return {
            "method": self.method, "width": self.width, "height": self.height,
            "altitude": self.altitude, "rate_hz": self.rate_hz, "max_time": self.max_time,
            "perturb": asdict(self.perturb), "controller": self.controller.to_dict(),
            "strategy": asdict(self.strategy), "dynamics": asdict(self.dynamics),
            "tracker_q": self.tracker_q, "tracker_r": self.tracker_r,
            "ascend_rate": self.ascend_rate, "turn_ratio": self.turn_ratio,
            "correct_tilt": self.correct_tilt, "start": self.start,
        }


@dataclass
class Trace:
    records: list
    summary: dict

    @property
    def status(self):
        return self.summary["status"]

    def to_jsonl(self):
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps({"summary": self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @property
    def digest(self):
        return self.summary["digest"]


def _tilt_corrected(line, pose, focal):
    t = math.radians(line.theta_deg)
    rho = correct_offset(line.rho, pose.roll, scale_k=focal * math.cos(t))
    rho = correct_offset(rho, pose.pitch, scale_k=focal * math.sin(t))
    return type(line)(rho, line.theta_deg, line.votes)


def _tilt_offset(theta_deg, pose, focal):
    t = math.radians(theta_deg)
    return focal * (math.cos(t) * math.tan(math.radians(pose.roll))
                    + math.sin(t) * math.tan(math.radians(pose.pitch)))


def line_crossings(lines, frame, min_angle=30.0):
    """Intersections of every pair of lines at least ``min_angle`` apart, inside the frame."""
    w, h = frame
    out = []
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            d = abs(lines[i].theta_deg - lines[j].theta_deg) % 180.0
            if min(d, 180.0 - d) < min_angle:
                continue
            p = lines[i].intersection(lines[j])
            if p is not None and 0 <= p[0] <= w - 1 and 0 <= p[1] <= h - 1:
                out.append((float(p[0]), float(p[1])))
    return tuple(out)


def _by_centre(tracks, centre, which):
    ref = 0.0 if which is LineClass.VERTICAL else 90.0
    return sorted(tracks, key=lambda t: (abs(t.line.aligned(ref)[0] - centre), t.id))


def _turn_flag(skel, vertical, nodes, pose, focal, frame, ratio, scale, capture):
    w, h = frame
    cap = 2.0 * capture * scale
    ahead = [n for n in nodes if n.y < h / 2.0 - cap]
    if vertical is None or not ahead:
        return Turn.NONE
    node = max(ahead, key=lambda n: n.y)
    # the skeleton lives in raw image coordinates: undo the tilt correction
    rho, theta = vertical.line.aligned(0.0)
    raw = type(vertical.line)(rho + _tilt_offset(theta, pose, focal), theta)
    band = 0.08 * h
    return detect_turn(skel, raw, ratio_threshold=ratio, min_pixels=max(5, 30 * scale),
                       margin=0.03 * w, y_range=(node.y - band, node.y + band))


def _errors_for(mode, verticals, horizontals, frame, forward_bias):
    w, h = frame
    if mode.kind is ModeKind.TRACK_LINE:
        return compute_errors(verticals, horizontals, frame, forward_bias=forward_bias)
    if mode.kind is ModeKind.TRACK_NODE:
        goal = None
        if mode.goal_line is not None:
            goal = next((t for t in horizontals if t.id == mode.goal_line), None)
        if goal is not None:
            return compute_errors(verticals, horizontals, frame, goal=goal)
        if mode.point is not None:
            e = compute_errors(verticals, horizontals, frame, forward_bias=0.0)
            return ErrorVector(w / 2.0 - mode.point[0], h / 2.0 - mode.point[1], e.dtheta)
        return compute_errors(verticals, horizontals, frame, forward_bias=0.0)
    if mode.kind is ModeKind.ROTATE and mode.point is not None:
        return ErrorVector(w / 2.0 - mode.point[0], h / 2.0 - mode.point[1], 0.0)
    return ErrorVector(0.0, 0.0, 0.0)


def _r(v, nd=6):
    return round(float(v), nd)


def _nearest_world_feature(world, x, y):
    best = ("none", -1, math.inf)
    for nid, (nx, ny) in world.nodes.items():
        d = math.hypot(nx - x, ny - y)
        if d < best[2]:
            best = ("node", nid, d)
    for ci, (cx, cy) in enumerate(world.corners):
        d = math.hypot(cx - x, cy - y)
        if d < best[2]:
            best = ("corner", ci, d)
    return best


def run_closed_loop(world, mission=None, config=None, rng_seed=0, start_pose=None,
                    keep_frames=False):
    """Fly ``mission`` (a :class:`MissionPlan`, default: serpentine scan) over ``world``.

    Returns a :class:`Trace`. The summary's ``status`` is ``"ok"`` when the
    plan completed and ``"failed"`` otherwise, with ``cause`` one of
    ``"lost-line"`` or ``"timeout"``. ``visits`` lists, for every completed
    dwell, the planned target and the world feature under the drone.
    """
    cfg = config or PipelineConfig()
    if cfg.rate_hz <= 0 or cfg.max_time <= 0:
        raise InvalidInputError("rate_hz and max_time must be > 0")
    if mission is None:
        mission = plan_mission(world) if world.nodes else MissionPlan((0,))
    dt = 1.0 / cfg.rate_hz
    frame = (cfg.width, cfg.height)
    intr = CameraIntrinsics.from_fov(world.spec.sigma, cfg.width, cfg.height)
    focal = intr.focal_px
    scale = cfg.width / float(cfg.strategy.reference_width)
    segmenter = LineSegmenter(hsv_range=DEFAULT_LINE_RANGE)
    detector = make_detector(cfg.method, segmenter)
    tracker = LineTracker(cfg.tracker_q, cfg.tracker_r)
    controller = Controller(cfg.controller, cfg.width)
    pose = start_pose or Pose(world.start[0], world.start[1], cfg.altitude,
                              yaw=world.start_heading)
    state = initial_state(mission)
    if cfg.start == "hover":
        state = type(state)(phase=Phase.HOVER_NODE, current_target=mission.targets[0])
    forward_bias = cfg.strategy.forward_bias_frac * cfg.height
    records, frames_out, visits = [], [], []
    prev_kind = None
    n_steps = int(round(cfg.max_time * cfg.rate_hz))
    hasher = hashlib.sha256()
    for step in range(n_steps):
        gt = render_camera(world, pose, intr, cfg.perturb, frame_seed(rng_seed, step))
        mask = segmenter.transform(gt.rendered)
        raw, skel = detect_with_skeleton(detector, mask)
        lines = [_tilt_corrected(l, pose, focal) for l in raw] if cfg.correct_tilt else raw
        tracker.update(lines)
        verticals = _by_centre(tracker.active(LineClass.VERTICAL), frame[0] / 2.0,
                               LineClass.VERTICAL)
        horizontals = _by_centre(tracker.active(LineClass.HORIZONTAL), frame[1] / 2.0,
                                 LineClass.HORIZONTAL)
        nodes = detect_nodes(verticals, horizontals, frame)
        turn = _turn_flag(skel, verticals[0] if verticals else None, nodes, pose, focal,
                          frame, cfg.turn_ratio, scale, cfg.strategy.capture_radius)
        info = FrameInfo(frame, tuple(verticals), tuple(horizontals), tuple(nodes), turn,
                         line_crossings(lines, frame), pose.altitude_h, len(lines))
        before = state
        state, mode = strategy_step(state, info, dt, mission, cfg.strategy)
        if len(state.visited) > len(before.visited):
            kind, fid, dist = _nearest_world_feature(world, pose.x, pose.y)
            visits.append({"target": state.visited[-1], "feature": kind, "feature_id": fid,
                           "distance_m": _r(dist), "step": step})

        if mode.kind is not prev_kind:
            controller.reset()
            prev_kind = mode.kind
        climb = cfg.ascend_rate if mode.kind is ModeKind.ASCEND else 0.0
        if mode.kind in (ModeKind.HOLD, ModeKind.ASCEND):
            err = ErrorVector(0.0, 0.0, 0.0)
            cmd = controller.hold(climb)
        else:
            try:
                err = _errors_for(mode, verticals, horizontals, frame, forward_bias)
            except LostLineError:
                err = ErrorVector(0.0, 0.0, 0.0)
            cmd = controller.step(err, dt, climb)
            if mode.kind is ModeKind.ROTATE:
                yaw = mode.direction * cfg.strategy.rotate_rate / 10.0
                cmd = clip_command((cmd.roll_cmd / 10.0, cmd.pitch_cmd / 10.0, yaw), climb)

        rec = {
            "step": step,
            "t": _r(step * dt),
            "pose": {k: _r(v) for k, v in pose.to_dict().items()},
            "gt_lines": [[_r(l.rho, 3), _r(l.theta_deg, 3), k]
                         for l, k in zip(gt.lines, gt.line_kinds)],
            "gt_nodes": gt.node_ids,
            "detections": [[_r(l.rho, 3), _r(l.theta_deg, 3)] for l in lines],
            "tracks": [t.to_dict() for t in verticals + horizontals],
            "nodes": [[_r(n.x, 3), _r(n.y, 3)] for n in nodes],
            "turn": turn.value,
            "phase": state.phase.value,
            "mode": mode.kind.value,
            "target": state.current_target,
            "errors": [_r(err.dx), _r(err.dy), _r(err.dtheta)],
            "command": [_r(cmd.roll_cmd), _r(cmd.pitch_cmd), _r(cmd.yaw_rate_cmd), _r(cmd.climb)],
        }
        for t in rec["tracks"]:
            t["rho"], t["theta_deg"] = _r(t["rho"], 3), _r(t["theta_deg"], 3)
        records.append(rec)
        hasher.update(json.dumps(rec, sort_keys=True).encode())
        if keep_frames:
            frames_out.append((gt.rendered, raw))
        if state.phase in (Phase.DONE, Phase.FAILED):
            break
        pose = step_dynamics(pose, cmd, dt, cfg.dynamics)

    if state.phase is Phase.DONE:
        status, cause = "ok", ""
    elif state.phase is Phase.FAILED:
        status, cause = "failed", state.cause or "lost-line"
    else:
        status, cause = "failed", "timeout"
    summary = {
        "status": status,
        "cause": cause,
        "planned": list(mission.targets),
        "visited": list(state.visited),
        "visits": visits,
        "l_as_node": sum(1 for v in visits if v["feature"] == "corner"),
        "frames": len(records),
        "sim_time": _r(len(records) * dt),
        "seed": int(rng_seed),
        "events": list(state.events),
        "final_pose": {k: _r(v) for k, v in pose.to_dict().items()},
    }
    hasher.update(json.dumps({k: v for k, v in summary.items()}, sort_keys=True).encode())
    summary["digest"] = hasher.hexdigest()
    trace = Trace(records, summary)
    if keep_frames:
        trace.frames = frames_out
    return trace
