"""Hessian-normal-form lines and the vertical/horizontal split.

A line is ``x cos(theta) + y sin(theta) = rho`` in image coordinates (origin
top-left, y down). The canonical form keeps ``theta`` in ``[0, 180)`` and lets
``rho`` carry the sign; ``(rho, theta)`` and ``(-rho, theta + 180)`` describe
the same line, and every comparison in the package goes through
:func:`align_theta` so that near-vertical lines at 179 deg and 1 deg compare
as neighbours.
"""

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HessianLine",
    "LineClass",
    "classify_line",
    "align_theta",
    "wrap_angle",
    "line_distance",
    "lines_to_jsonl",
    "lines_from_jsonl",
]


def wrap_angle(deg):
    """Wrap a line-angle difference into ``(-90, 90]``."""
    d = math.fmod(deg, 180.0)
    if d <= -90.0:
        d += 180.0
    elif d > 90.0:
        d -= 180.0
    return d


def align_theta(rho, theta, theta_ref):
    """Re-express ``(rho, theta)`` with theta within 90 deg of ``theta_ref``."""
    d = theta - theta_ref
    while d > 90.0:
        theta -= 180.0
        rho = -rho
        d -= 180.0
    while d <= -90.0:
        theta += 180.0
        rho = -rho
        d += 180.0
    return rho, theta


@dataclass(frozen=True)
class HessianLine:
    rho: float
    theta_deg: float
    votes: float = 1.0

    def __post_init__(self):
        rho, theta = float(self.rho), float(self.theta_deg)
        if not (math.isfinite(rho) and math.isfinite(theta)):
            raise ValueError(f"non-finite line parameters ({rho}, {theta})")
        k = math.floor(theta / 180.0)
        if k:
            theta -= 180.0 * k
            if k % 2:
                rho = -rho
        if theta >= 180.0:  # fp edge after the subtraction
            theta -= 180.0
            rho = -rho
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "theta_deg", theta)

    @classmethod
    def through(cls, x0, y0, x1, y1, votes=1.0):
        """Line through two distinct points."""
        dx, dy = x1 - x0, y1 - y0
        theta = math.degrees(math.atan2(dx, -dy))  # normal is the direction rotated by 90 deg
        t = math.radians(theta)
        return cls(x0 * math.cos(t) + y0 * math.sin(t), theta, votes)

    @property
    def normal(self):
        t = math.radians(self.theta_deg)
        return math.cos(t), math.sin(t)

    def signed_distance(self, x, y):
        c, s = self.normal
        return np.asarray(x) * c + np.asarray(y) * s - self.rho

    def aligned(self, theta_ref):
        """``(rho, theta)`` with theta within 90 deg of ``theta_ref``."""
        return align_theta(self.rho, self.theta_deg, theta_ref)

    def intersection(self, other, eps=1e-6):
        """Intersection point, or ``None`` for (near-)parallel lines."""
        t1, t2 = math.radians(self.theta_deg), math.radians(other.theta_deg)
        det = math.sin(t2 - t1)
        if abs(det) < eps:
            return None
        c1, s1, c2, s2 = math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2)
        x = (self.rho * s2 - other.rho * s1) / det
        y = (other.rho * c1 - self.rho * c2) / det
        return x, y

    def to_dict(self, method=None, **extra):
        d = {"rho": self.rho, "theta_deg": self.theta_deg}
        if method is not None:
            d["method"] = method
        d.update(extra)
        return d


class LineClass(enum.Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


def classify_line(line, lower=30.0, upper=150.0):
    """Vertical when ``0 <= theta < lower`` or ``upper < theta < 180``.

    The inequalities are strict exactly as printed, so ``theta == upper`` is
    horizontal.
    """
    theta = line.theta_deg if isinstance(line, HessianLine) else HessianLine(0.0, line).theta_deg
    if 0.0 <= theta < lower or upper < theta < 180.0:
        return LineClass.VERTICAL
    return LineClass.HORIZONTAL


def line_distance(a, b, rho_gate, theta_gate):
    """Gated association distance ``|drho|/rho_gate + |dtheta|/theta_gate``.

    Returns ``inf`` when either residual falls outside its gate.
    """
    rho_b, theta_b = b.aligned(a.theta_deg)
    drho = abs(rho_b - a.rho)
    dtheta = abs(theta_b - a.theta_deg)
    if drho > rho_gate or dtheta > theta_gate:
        return math.inf
    return drho / rho_gate + dtheta / theta_gate


def lines_to_jsonl(lines, method, extra=None):
    """Serialise lines as JSON-lines ``{"rho", "theta_deg", "method", "inliers"}``."""
    out = []
    for line in lines:
        rec = {"rho": line.rho, "theta_deg": line.theta_deg, "method": method,
               "inliers": int(round(line.votes))}
        if extra:
            rec.update(extra)
        out.append(json.dumps(rec))
    return "\n".join(out) + ("\n" if out else "")


def lines_from_jsonl(text):
    lines = []
    for raw in text.splitlines():
        raw = raw.strip()
        if not raw:
            continue
        rec = json.loads(raw)
        lines.append(HessianLine(rec["rho"], rec["theta_deg"], rec.get("inliers", 1)))
    return lines
