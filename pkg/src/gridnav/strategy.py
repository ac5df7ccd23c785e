"""Mission state machine for grid navigation.

``strategy_step`` is a pure function from ``(state, frame_info, dt)`` to
``(new_state, mode)``; the closed loop turns the mode into errors for the
controller. Phases and their legal successors are listed in
:data:`LEGAL_TRANSITIONS`.

Behaviour in brief. The drone follows the vertical line with a constant
forward bias. A node (vertical x horizontal intersection) that appears
ahead of the image centre *arms* the state machine; an armed node that
reaches the capture radius is hovered over for ``dwell_time`` seconds of
in-radius time, then the next target is taken. An intersection whose
skeleton is one-sided (an L) is never captured: it raises a turn flag and,
after ``turn_confirm`` consecutive flagged frames, the drone centres on the
corner, rotates 90 degrees toward the flagged side and resumes following.
When every line is lost it holds and climbs for up to ``recovery_time``
seconds, then fails.
"""

import enum
import math
from dataclasses import asdict, dataclass, field, replace

from ._validation import InvalidInputError
from .tracking import Turn

__all__ = [
    "Phase",
    "ModeKind",
    "ControlMode",
    "Task",
    "MissionPlan",
    "StrategyConfig",
    "StrategyState",
    "FrameInfo",
    "LEGAL_TRANSITIONS",
    "plan_mission",
    "initial_state",
    "strategy_step",
    "select_goal_line",
]


class Phase(enum.Enum):
    TAKEOFF = "takeoff"
    FOLLOW_LINE = "follow_line"
    HOVER_NODE = "hover_node"
    TURNING = "turning"
    RECOVER = "recover"
    DONE = "done"
    FAILED = "failed"


LEGAL_TRANSITIONS = {
    Phase.TAKEOFF: {Phase.TAKEOFF, Phase.FOLLOW_LINE, Phase.RECOVER, Phase.FAILED},
    Phase.FOLLOW_LINE: {Phase.FOLLOW_LINE, Phase.HOVER_NODE, Phase.TURNING, Phase.RECOVER},
    Phase.HOVER_NODE: {Phase.HOVER_NODE, Phase.FOLLOW_LINE, Phase.DONE, Phase.RECOVER},
    Phase.TURNING: {Phase.TURNING, Phase.FOLLOW_LINE, Phase.RECOVER},
    Phase.RECOVER: {Phase.RECOVER, Phase.TAKEOFF, Phase.FOLLOW_LINE, Phase.HOVER_NODE,
                    Phase.TURNING, Phase.FAILED},
    Phase.DONE: {Phase.DONE},
    Phase.FAILED: {Phase.FAILED},
}


class ModeKind(enum.Enum):
    TRACK_NODE = "track_node"
    TRACK_LINE = "track_line"
    HOLD = "hold"
    ASCEND = "ascend"
    ROTATE = "rotate"


@dataclass(frozen=True)
class ControlMode:
    """What the controller should regulate this frame.

    ``goal_line`` is the horizontal track to hold (TRACK_NODE),
    ``point`` an explicit image point to centre (TRACK_NODE without a goal
    track, ROTATE), ``direction`` the yaw sense for ROTATE (+1 = left,
    counter-clockwise).
    """

    kind: ModeKind
    goal_line: int | None = None
    point: tuple | None = None
    direction: int = 0


class Task(enum.Enum):
    SCAN = "scan"
    TRAVERSE = "traverse"


@dataclass(frozen=True)
class MissionPlan:
    targets: tuple
    dwell_time: float = 2.0
    task: Task = Task.SCAN

    def __post_init__(self):
        if not self.targets:
            raise InvalidInputError("a mission needs at least one target node")
        if self.dwell_time < 0:
            raise InvalidInputError("dwell_time must be >= 0")

    def to_dict(self):
        return {"targets": list(self.targets), "dwell_time": self.dwell_time,
                "task": self.task.value}


def plan_mission(world, task=Task.SCAN, dwell_time=2.0):
    """Serpentine order: row 0 forward, row 1 backward, and so on.

    >>> from gridnav.sim.world import WorldSpec, generate_world
    >>> w = generate_world(WorldSpec.from_fov(2.0, 90.0, shelf_rows=2, nodes_per_row=3))
    >>> plan_mission(w).targets
    (0, 1, 2, 5, 4, 3)
    """
    if not world.nodes:
        raise InvalidInputError("world has no nodes")
    n = world.spec.nodes_per_row
    order = []
    for r in range(world.spec.shelf_rows):
        row = [r * n + k for k in range(n)]
        order += row if r % 2 == 0 else row[::-1]
    order = [i for i in order if i in world.nodes]
    return MissionPlan(tuple(order), float(dwell_time), Task(task))


@dataclass(frozen=True)
class StrategyConfig:
    """Pixel quantities are at ``reference_width`` and rescaled per frame."""

    capture_radius: float = 40.0
    forward_bias_frac: float = 0.15
    recovery_time: float = 3.0
    max_ascend: float = 0.5
    turn_confirm: int = 3
    turn_angle: float = 90.0
    rotate_rate: float = 1.0
    settle_frames: int = 10
    reference_width: int = 1920

    @classmethod
    def from_dict(cls, d):
        return cls(**(d or {}))


@dataclass(frozen=True)
class FrameInfo:
    """Everything the state machine sees in one frame.

    ``verticals``/``horizontals`` are confirmed tracks, principal first;
    ``nodes`` are their intersections; ``turn`` is the L classification of
    the intersection ahead (``Turn.NONE`` when there is none);
    ``crossings`` are intersections of raw detections, used while rotating;
    ``detections`` counts this frame's raw lines (tracks need a few frames to
    confirm, so a frame with detections but no tracks is not "lost").
    """

    frame: tuple
    verticals: tuple = ()
    horizontals: tuple = ()
    nodes: tuple = ()
    turn: Turn = Turn.NONE
    crossings: tuple = ()
    altitude: float = 0.0
    detections: int = 0


@dataclass(frozen=True)
class StrategyState:
    phase: Phase = Phase.TAKEOFF
    target_index: int = 0
    current_target: int | None = None
    goal_line: int | None = None
    dwell_elapsed: float = 0.0
    visited: tuple = ()
    armed: bool = False
    turn_count: int = 0
    turn_dir: int = 0
    turn_stage: str = ""
    turn_progress: float = 0.0
    settle: int = 0
    lost_elapsed: float = 0.0
    resume_phase: Phase | None = None
    base_altitude: float | None = None
    goal_estimate: tuple | None = None
    goal_altitude: float | None = None
    cause: str = ""
    events: tuple = field(default_factory=tuple)

    def to_dict(self):
        d = asdict(self)
        d["phase"] = self.phase.value
        d["resume_phase"] = self.resume_phase.value if self.resume_phase else None
        d["visited"] = list(self.visited)
        d["events"] = list(self.events)
        return d


def initial_state(plan):
    return StrategyState(current_target=plan.targets[0])


def _scale(cfg, frame):
    return frame[0] / float(cfg.reference_width)


def _ahead(node, frame, cap):
    return node.y < frame[1] / 2.0 - 2.0 * cap


def _dist_to_centre(p, frame):
    return math.hypot(p[0] - frame[0] / 2.0, p[1] - frame[1] / 2.0)


def _nearest_node(nodes, frame):
    if not nodes:
        return None
    return min(nodes, key=lambda n: _dist_to_centre((n.x, n.y), frame))


def _track_by_id(tracks, tid):
    for t in tracks:
        if t.id == tid:
            return t
    return None


def select_goal_line(horizontals, current_goal, altitude_changed=False, frame=None,
                     previous=None, altitude_ratio=1.0):
    """Which horizontal track to hold.

    The current goal is kept while its track lives (and the altitude is
    unchanged). After an altitude change the track nearest the previous
    estimate ``previous = (rho, theta)`` rescaled about the image centre
    by ``altitude_ratio = H_old / H_new`` is chosen. Otherwise the track
    nearest the image centre wins, ties going to the one ahead (smaller
    rho). Returns ``None`` when there are no horizontal tracks.
    """
    tracks = list(horizontals)
    if not tracks:
        return None
    if not altitude_changed and current_goal is not None and _track_by_id(tracks, current_goal):
        return current_goal
    cy = frame[1] / 2.0 if frame is not None else 0.0
    if altitude_changed and previous is not None:
        rho_prev, theta_prev = previous
        want = cy + (rho_prev - cy) * altitude_ratio
        return min(tracks, key=lambda t: (abs(t.line.aligned(90.0)[0] - want)
                                          + abs(t.line.aligned(90.0)[1] - theta_prev), t.id)).id

    def key(t):
        rho = t.line.aligned(90.0)[0]
        return (abs(rho - cy), 0 if rho <= cy else 1, t.id)

    return min(tracks, key=key).id


def _goal_for_node(node, horizontals):
    if node.horizontal_track >= 0 and _track_by_id(horizontals, node.horizontal_track):
        return node.horizontal_track
    return None


def _event(state, kind, **kw):
    return state.events + (dict(kind=kind, **kw),)


def strategy_step(state, info, dt, plan, cfg=None):
    """Advance the mission by one frame; returns ``(new_state, ControlMode)``."""
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    cfg = cfg or StrategyConfig()
    new, mode = _transition(state, info, dt, plan, cfg)
    if new.phase not in LEGAL_TRANSITIONS[state.phase]:
        raise AssertionError(f"illegal transition {state.phase} -> {new.phase}")
    return new, mode


def _lost(info):
    return not info.verticals and not info.horizontals and info.detections == 0


def _transition(s, info, dt, plan, cfg):
    hold = ControlMode(ModeKind.HOLD)
    if s.phase in (Phase.DONE, Phase.FAILED):
        return s, hold
    if s.base_altitude is None:
        s = replace(s, base_altitude=info.altitude)

    if s.phase is Phase.RECOVER:
        return _recover(s, info, dt, cfg)
    if s.phase is not Phase.TAKEOFF and _lost(info):
        s = replace(s, phase=Phase.RECOVER, resume_phase=s.phase, lost_elapsed=0.0,
                    events=_event(s, "lost"))
        return _recover(s, info, dt, cfg)

    if s.phase is Phase.TAKEOFF:
        if info.verticals:
            return replace(s, phase=Phase.FOLLOW_LINE, lost_elapsed=0.0), \
                ControlMode(ModeKind.TRACK_LINE)
        if info.detections:
            # lines seen but not yet confirmed as tracks
            return s, hold
        lost = s.lost_elapsed + dt
        if lost >= cfg.recovery_time:
            return replace(s, phase=Phase.FAILED, lost_elapsed=lost, cause="lost-line"), hold
        climbing = info.altitude < s.base_altitude + cfg.max_ascend
        return replace(s, lost_elapsed=lost), ControlMode(ModeKind.ASCEND if climbing
                                                          else ModeKind.HOLD)

    if s.phase is Phase.FOLLOW_LINE:
        return _follow(s, info, plan, cfg)
    if s.phase is Phase.HOVER_NODE:
        return _hover(s, info, dt, plan, cfg)
    return _turning(s, info, dt, cfg)


def _recover(s, info, dt, cfg):
    if not _lost(info):
        back = s.resume_phase or Phase.FOLLOW_LINE
        goal = s.goal_line
        if back is Phase.HOVER_NODE and s.goal_estimate is not None:
            ratio = (s.goal_altitude or info.altitude) / info.altitude
            goal = select_goal_line(info.horizontals, s.goal_line, True, info.frame,
                                    s.goal_estimate, ratio)
            if goal is None:
                back = Phase.FOLLOW_LINE
        s = replace(s, phase=back, resume_phase=None, lost_elapsed=0.0,
                    goal_line=goal if back is Phase.HOVER_NODE else None,
                    events=_event(s, "recovered"))
        if back is Phase.HOVER_NODE:
            return s, ControlMode(ModeKind.TRACK_NODE, goal_line=goal)
        if back is Phase.TURNING:
            return s, ControlMode(ModeKind.HOLD)
        return s, ControlMode(ModeKind.TRACK_LINE)
    lost = s.lost_elapsed + dt
    if lost >= cfg.recovery_time:
        return replace(s, phase=Phase.FAILED, lost_elapsed=lost, cause="lost-line",
                       events=_event(s, "failed", cause="lost-line")), \
            ControlMode(ModeKind.HOLD)
    climbing = info.altitude < (s.base_altitude or info.altitude) + cfg.max_ascend
    return replace(s, lost_elapsed=lost), ControlMode(ModeKind.ASCEND if climbing
                                                      else ModeKind.HOLD)


def _follow(s, info, plan, cfg):
    frame = info.frame
    cap = cfg.capture_radius * _scale(cfg, frame)
    ahead = [n for n in info.nodes if _ahead(n, frame, cap)]
    armed = s.armed or bool(ahead)
    turn_count = s.turn_count + 1 if (armed and info.turn is not Turn.NONE) else 0
    s = replace(s, armed=armed, turn_count=turn_count)
    if turn_count >= cfg.turn_confirm:
        direction = 1 if info.turn is Turn.LEFT else -1
        s = replace(s, phase=Phase.TURNING, turn_dir=direction, turn_stage="approach",
                    turn_progress=0.0, settle=0, turn_count=0, armed=False, goal_line=None,
                    events=_event(s, "turn", direction=info.turn.value))
        return _turning(s, info, 0.0, cfg)
    if armed and info.turn is Turn.NONE and s.turn_count == 0:
        node = _nearest_node(info.nodes, frame)
        if node is not None and _dist_to_centre((node.x, node.y), frame) <= cap:
            goal = _goal_for_node(node, info.horizontals)
            if goal is not None:
                s = replace(s, phase=Phase.HOVER_NODE, goal_line=goal, dwell_elapsed=0.0,
                            armed=False, events=_event(s, "capture", target=s.current_target))
                return s, ControlMode(ModeKind.TRACK_NODE, goal_line=goal)
    return s, ControlMode(ModeKind.TRACK_LINE)


def _hover(s, info, dt, plan, cfg):
    frame = info.frame
    cap = cfg.capture_radius * _scale(cfg, frame)
    goal = select_goal_line(info.horizontals, s.goal_line, frame=frame)
    if goal is None:
        # the goal horizontal is gone: keep centring on the vertical alone
        return replace(s, goal_line=None), ControlMode(ModeKind.TRACK_LINE)
    track = _track_by_id(info.horizontals, goal)
    node = None
    for n in info.nodes:
        if n.horizontal_track == goal:
            node = n if node is None or _dist_to_centre((n.x, n.y), frame) < \
                _dist_to_centre((node.x, node.y), frame) else node
    inside = node is not None and _dist_to_centre((node.x, node.y), frame) <= cap
    dwell = s.dwell_elapsed + (dt if inside else 0.0)
    s = replace(s, goal_line=goal, dwell_elapsed=dwell,
                goal_estimate=track.line.aligned(90.0), goal_altitude=info.altitude)
    if dwell + 1e-9 < plan.dwell_time:
        return s, ControlMode(ModeKind.TRACK_NODE, goal_line=goal)
    visited = s.visited + (s.current_target,)
    idx = s.target_index + 1
    s = replace(s, visited=visited, target_index=idx, dwell_elapsed=0.0,
                events=_event(s, "visited", target=s.current_target))
    if idx >= len(plan.targets):
        return replace(s, phase=Phase.DONE, goal_line=None, current_target=None), \
            ControlMode(ModeKind.HOLD)
    return replace(s, phase=Phase.FOLLOW_LINE, goal_line=None, armed=False,
                   current_target=plan.targets[idx]), ControlMode(ModeKind.TRACK_LINE)


def _turning(s, info, dt, cfg):
    frame = info.frame
    cap = cfg.capture_radius * _scale(cfg, frame)
    if s.turn_stage == "approach":
        # centre over the corner first; the L's crossbar is the goal line
        node = _nearest_node(info.nodes, frame)
        if node is None:
            return s, ControlMode(ModeKind.TRACK_LINE)
        goal = _goal_for_node(node, info.horizontals)
        inside = _dist_to_centre((node.x, node.y), frame) <= cap
        settle = s.settle + 1 if inside else 0
        if settle >= cfg.settle_frames:
            s = replace(s, turn_stage="rotate", settle=0, goal_line=None)
            return s, ControlMode(ModeKind.ROTATE, point=(node.x, node.y),
                                  direction=s.turn_dir)
        s = replace(s, settle=settle, goal_line=None)
        if goal is None:
            return s, ControlMode(ModeKind.TRACK_NODE, point=(node.x, node.y))
        return s, ControlMode(ModeKind.TRACK_NODE, goal_line=goal, point=(node.x, node.y))
    progress = s.turn_progress + cfg.rotate_rate * dt
    if progress >= cfg.turn_angle - 1e-9:
        return replace(s, phase=Phase.FOLLOW_LINE, turn_stage="", turn_progress=0.0,
                       turn_dir=0, armed=False, turn_count=0,
                       events=_event(s, "turned")), ControlMode(ModeKind.TRACK_LINE)
    point = None
    if info.crossings:
        point = min(info.crossings, key=lambda p: _dist_to_centre(p, frame))
    return replace(s, turn_progress=progress), ControlMode(ModeKind.ROTATE, point=point,
                                                           direction=s.turn_dir)
