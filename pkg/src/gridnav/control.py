"""Line-pose errors to roll/pitch/yaw-rate commands.

Three independent PID loops act on the image-space errors ``dx`` (vertical
line off centre), ``dy`` (goal horizontal line off centre) and ``dtheta``
(grid rotation). Their outputs are velocities clipped to +-0.1 and mapped
to +-1 degree commands. Line positions are first corrected for the shift a
tilted camera introduces, ``scale_k * tan(tilt)``.
"""

import csv
import io
import math
from dataclasses import dataclass, field

from ._validation import InvalidInputError
from .lines import wrap_angle

__all__ = [
    "PidGains",
    "PidState",
    "ErrorVector",
    "ControlCommand",
    "ControllerConfig",
    "LostLineError",
    "pid_step",
    "compute_errors",
    "correct_offset",
    "clip_command",
    "Controller",
    "control_log_csv",
    "VELOCITY_LIMIT",
    "COMMAND_SCALE",
]

VELOCITY_LIMIT = 0.1
COMMAND_SCALE = 10.0
REFERENCE_WIDTH = 1920


class LostLineError(RuntimeError):
    """No line is tracked, so no error can be formed."""


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    i_max: float | None = None

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.kp < 0:
            raise InvalidInputError("kp must be >= 0")

    @property
    def integral_limit(self):
        """Clamp on the integral so ``ki * integral`` never exceeds the velocity limit."""
        if self.i_max is not None:
            return float(self.i_max)
        if self.ki == 0:
            return math.inf
        return VELOCITY_LIMIT / abs(self.ki)


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


def pid_step(gains, state, error, dt):
    """``kp e + ki I + kd de/dt`` with ``I`` clamped; returns ``(output, new_state)``.

    >>> out, st = pid_step(PidGains(1, 1), PidState(), 2.0, 1.0)
    >>> out, pid_step(PidGains(1, 1), st, 2.0, 1.0)[0]
    (4.0, 6.0)
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    lim = gains.integral_limit
    integral = min(max(state.integral + error * dt, -lim), lim)
    deriv = (error - state.prev_error) / dt if state.initialized else 0.0
    out = gains.kp * error + gains.ki * integral + gains.kd * deriv
    return out, PidState(integral, error, True)


@dataclass(frozen=True)
class ErrorVector:
    dx: float
    dy: float
    dtheta: float


@dataclass(frozen=True)
class ControlCommand:
    roll_cmd: float
    pitch_cmd: float
    yaw_rate_cmd: float
    climb: float = 0.0


def _clip_axis(v):
    if not math.isfinite(v):
        v = 0.0 if math.isnan(v) else math.copysign(VELOCITY_LIMIT, v)
    return min(max(v, -VELOCITY_LIMIT), VELOCITY_LIMIT) * COMMAND_SCALE


def clip_command(raw, climb=0.0):
    """Clamp ``(vx, vy, vyaw)`` velocities to +-0.1 and scale to +-1 degree commands.

    NaN maps to 0 and infinities to the matching bound.
    """
    vx, vy, vyaw = (float(v) for v in raw)
    return ControlCommand(_clip_axis(vx), _clip_axis(vy), _clip_axis(vyaw), float(climb))


def correct_offset(rho, tilt_angle, altitude_h=None, scale_k=None):
    """Remove the image shift a tilted camera adds to a line position.

    ``offset = scale_k * tan(tilt)``. ``scale_k`` is normally the focal
    length in pixels; passing ``scale_k=None`` falls back to
    ``altitude_h`` (the literal metres-based form, kept for comparison).
    """
    if not abs(tilt_angle) < 45.0:
        raise InvalidInputError(f"|tilt_angle| must be < 45 deg, got {tilt_angle}")
    k = scale_k if scale_k is not None else altitude_h
    if k is None:
        raise InvalidInputError("either scale_k or altitude_h is required")
    return rho - k * math.tan(math.radians(tilt_angle))


def _vertical_rho(track_or_line):
    line = getattr(track_or_line, "line", track_or_line)
    return line.aligned(0.0)


def _horizontal_rho(track_or_line):
    line = getattr(track_or_line, "line", track_or_line)
    return line.aligned(90.0)


def compute_errors(verticals, horizontals, frame, goal=None, forward_bias=None):
    """Image-space errors from the principal vertical and the goal horizontal.

    ``frame`` is ``(width, height)``. The principal vertical is the first
    entry of ``verticals`` (callers order by confidence). ``goal`` picks the
    horizontal (default: first); ``forward_bias`` replaces ``dy`` by a
    constant to steer along the line when no goal horizontal is used.
    ``dtheta`` comes from the goal horizontal's deviation from 90 deg when
    available, otherwise from the vertical's deviation from 0 deg.

    Raises :class:`LostLineError` when no line is tracked at all.
    """
    w, h = frame
    verticals = list(verticals)
    horizontals = list(horizontals)
    if not verticals and not horizontals:
        raise LostLineError("no line tracked")
    hz = goal if goal is not None else (horizontals[0] if horizontals else None)
    dx = 0.0
    dtheta = 0.0
    if verticals:
        rho_v, theta_v = _vertical_rho(verticals[0])
        dx = w / 2.0 - rho_v
        dtheta = wrap_angle(0.0 - theta_v)
    if hz is not None and forward_bias is None:
        rho_h, theta_h = _horizontal_rho(hz)
        dy = h / 2.0 - rho_h
        if not verticals:
            dtheta = wrap_angle(90.0 - theta_h)
    else:
        dy = 0.0 if forward_bias is None else float(forward_bias)
    return ErrorVector(float(dx), float(dy), float(dtheta))


def _default_gains():
    return {
        "x": PidGains(0.0015, 0.00001, 0.0001),
        "y": PidGains(0.0015, 0.00001, 0.0001),
        "yaw": PidGains(0.01, 0.0, 0.0),
    }


@dataclass
class ControllerConfig:
    """Gains are per pixel at 1920 px width and rescaled to the frame width."""

    gains: dict = field(default_factory=_default_gains)
    scale_k: float | None = None
    reference_width: int = REFERENCE_WIDTH

    @classmethod
    def from_dict(cls, d):
        gains = _default_gains()
        for axis, g in (d.get("gains") or {}).items():
            gains[axis] = PidGains(**g)
        return cls(gains, d.get("scale_k"), d.get("reference_width", REFERENCE_WIDTH))

    def to_dict(self):
        return {"gains": {a: {"kp": g.kp, "ki": g.ki, "kd": g.kd, "i_max": g.i_max}
                          for a, g in self.gains.items()},
                "scale_k": self.scale_k, "reference_width": self.reference_width}


class Controller:
    """Three PID loops from :class:`ErrorVector` to :class:`ControlCommand`.

    ``dx`` drives roll, ``dy`` drives pitch and ``dtheta`` drives the yaw
    rate. Pixel errors are expressed at the reference width so the same
    gains work at any resolution.
    """

    def __init__(self, config=None, width=REFERENCE_WIDTH):
        self.config = config or ControllerConfig()
        self.scale = self.config.reference_width / float(width)
        self.reset()

    def reset(self, axes=("x", "y", "yaw")):
        if not hasattr(self, "states"):
            self.states = {}
        for a in axes:
            self.states[a] = PidState()

    def step(self, err, dt, climb=0.0):
        g = self.config.gains
        vx, self.states["x"] = pid_step(g["x"], self.states["x"], err.dx * self.scale, dt)
        vy, self.states["y"] = pid_step(g["y"], self.states["y"], err.dy * self.scale, dt)
        vz, self.states["yaw"] = pid_step(g["yaw"], self.states["yaw"], err.dtheta, dt)
        # a line left of centre (dx > 0) needs a move left (negative roll);
        # a goal ahead of centre (dy > 0) needs a move forward (nose down)
        return clip_command((-vx, -vy, vz), climb)

    def hold(self, climb=0.0):
        self.reset()
        return ControlCommand(0.0, 0.0, 0.0, float(climb))


def control_log_csv(rows):
    """CSV text with columns step, dx, dy, dtheta, roll_cmd, pitch_cmd, yaw_rate_cmd."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step", "dx", "dy", "dtheta", "roll_cmd", "pitch_cmd", "yaw_rate_cmd"])
    for step, err, cmd in rows:
        wr.writerow([step, repr(err.dx), repr(err.dy), repr(err.dtheta),
                     repr(cmd.roll_cmd), repr(cmd.pitch_cmd), repr(cmd.yaw_rate_cmd)])
    return buf.getvalue()
