"""Velocity-level drone response to attitude commands.

Attitude follows the command through a first-order lag with time constant
``tau``. The horizontal body velocity is ``k_v * tan(attitude)`` per axis:
positive roll moves the drone to its right, positive pitch (nose up) moves
it backward. Yaw integrates the commanded rate and altitude integrates the
commanded climb rate.
"""

import math
from dataclasses import dataclass

from .._validation import InvalidInputError
from .camera import MAX_TILT, Pose

__all__ = ["DynamicsParams", "step_dynamics", "body_velocity"]


@dataclass(frozen=True)
class DynamicsParams:
    k_v: float = 20.0
    tau: float = 0.2
    max_climb: float = 0.5

    def __post_init__(self):
        if not self.k_v > 0 or not self.tau >= 0 or not self.max_climb >= 0:
            raise InvalidInputError("k_v must be > 0, tau and max_climb >= 0")

    @classmethod
    def from_dict(cls, d):
        return cls(**(d or {}))


def body_velocity(pose, params):
    """World-frame ``(vX, vY)`` produced by the pose's current attitude."""
    right = params.k_v * math.tan(math.radians(pose.roll))
    forward = -params.k_v * math.tan(math.radians(pose.pitch))
    psi = math.radians(pose.yaw)
    c, s = math.cos(psi), math.sin(psi)
    return right * c - forward * s, right * s + forward * c


def _lag(value, target, alpha):
    return value + (target - value) * alpha


def step_dynamics(pose, cmd, dt, params=None):
    """Advance ``pose`` by ``dt`` seconds under ``cmd``.

    The attitude is updated first and the translation uses the mean of the
    old and new velocities (trapezoidal rule).
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    p = params or DynamicsParams()
    alpha = 1.0 if p.tau == 0 else 1.0 - math.exp(-dt / p.tau)
    roll = min(max(_lag(pose.roll, cmd.roll_cmd, alpha), -MAX_TILT), MAX_TILT)
    pitch = min(max(_lag(pose.pitch, cmd.pitch_cmd, alpha), -MAX_TILT), MAX_TILT)
    yaw = pose.yaw + cmd.yaw_rate_cmd * dt
    climb = min(max(cmd.climb, -p.max_climb), p.max_climb)
    altitude = max(1e-3, pose.altitude_h + climb * dt)
    v0 = body_velocity(pose, p)
    mid = Pose(pose.x, pose.y, pose.altitude_h, roll, pitch, yaw)
    v1 = body_velocity(mid, p)
    x = pose.x + 0.5 * (v0[0] + v1[0]) * dt
    y = pose.y + 0.5 * (v0[1] + v1[1]) * dt
    return Pose(x, y, altitude, roll, pitch, yaw)
