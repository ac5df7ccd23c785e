"""Temporal smoothing and scene interpretation for detected lines.

Each line is smoothed by a two-state Kalman filter over ``(rho, theta)``
with an identity motion model. Detections are associated to tracks with a
gated greedy nearest-neighbour rule inside each line class, nodes are the
vertical x horizontal intersections, and an L-turn is a skeleton that is
heavily one-sided about the vertical line.
"""

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import InvalidInputError, check_mask, check_positive
from .lines import HessianLine, LineClass, classify_line, line_distance, wrap_angle

__all__ = [
    "InternalStateError",
    "KalmanLineState",
    "kalman_update",
    "kalman_predict",
    "innovation",
    "LineTrack",
    "Association",
    "associate",
    "fuse_detections",
    "Node",
    "detect_nodes",
    "Turn",
    "detect_turn",
    "LineTracker",
    "frame_record",
]

RHO_GATE = 60.0
THETA_GATE = 15.0


class InternalStateError(RuntimeError):
    """A filter reached a state that violates its invariants."""


def _check_psd(cov, tol=1e-9):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
        raise InternalStateError(f"covariance must be a finite 2x2 matrix, got {cov!r}")
    if abs(cov[0, 1] - cov[1, 0]) > tol * max(1.0, float(np.abs(cov).max())):
        raise InternalStateError("covariance is not symmetric")
    if np.linalg.eigvalsh(cov).min() < -tol * max(1.0, float(np.abs(cov).max())):
        raise InternalStateError("covariance is not positive semi-definite")
    return cov


@dataclass(frozen=True)
class KalmanLineState:
    """Estimate of one line's ``(rho, theta)`` with its 2x2 covariance.

    ``q`` and ``r`` are the per-component process and measurement variances
    (px^2 for rho, deg^2 for theta).
    """

    rho: float
    theta: float
    cov: np.ndarray
    q: float = 0.5
    r: float = 9.0

    @classmethod
    def from_line(cls, line, q=0.5, r=9.0, p0=None):
        p0 = r if p0 is None else p0
        return cls(line.rho, line.theta_deg, np.eye(2) * float(p0), q, r)

    @property
    def line(self):
        return HessianLine(self.rho, self.theta)


def innovation(state, measurement):
    """Measurement minus estimate, theta residual wrapped to ``(-90, 90]``."""
    rho_m, theta_m = measurement.aligned(state.theta)
    return np.array([rho_m - state.rho, wrap_angle(theta_m - state.theta)])


def kalman_predict(state):
    """Identity motion: only the covariance grows, by ``q I``."""
    cov = _check_psd(state.cov)
    return KalmanLineState(state.rho, state.theta, cov + state.q * np.eye(2), state.q, state.r)


def _canonical(rho, theta, cov):
    # keep theta in [0, 180); a half-turn flips rho and the rho/theta correlation
    line = HessianLine(rho, theta)
    if round((line.theta_deg - theta) / 180.0) % 2:
        cov = cov.copy()
        cov[0, 1] = -cov[0, 1]
        cov[1, 0] = -cov[1, 0]
    return line.rho, line.theta_deg, cov


def kalman_update(state, measurement, predict=True):
    """One predict + update cycle against a measured line.

    Raises :class:`InternalStateError` if the prior covariance is not PSD.
    """
    prior = kalman_predict(state) if predict else KalmanLineState(
        state.rho, state.theta, _check_psd(state.cov), state.q, state.r)
    P = prior.cov
    y = innovation(prior, measurement)
    S = P + prior.r * np.eye(2)
    K = P @ np.linalg.inv(S)
    x = np.array([prior.rho, prior.theta]) + K @ y
    post = (np.eye(2) - K) @ P
    post = 0.5 * (post + post.T)
    rho, theta, post = _canonical(float(x[0]), float(x[1]), post)
    return KalmanLineState(rho, theta, post, prior.q, prior.r)


@dataclass
class LineTrack:
    id: int
    line_class: LineClass
    state: KalmanLineState
    frames_since_seen: int = 0
    hits: int = 1
    confirmed: bool = False

    @property
    def line(self):
        return self.state.line

    def to_dict(self):
        return {"id": self.id, "class": self.line_class.value,
                "rho": self.state.rho, "theta_deg": self.state.theta}


@dataclass
class Association:
    matches: list = field(default_factory=list)  # (track id, detection index)
    unmatched_tracks: list = field(default_factory=list)
    unmatched_detections: list = field(default_factory=list)


def associate(tracks, detections, rho_gate=RHO_GATE, theta_gate=THETA_GATE):
    """Greedy gated nearest-neighbour assignment within each line class."""
    det_cls = [classify_line(d) for d in detections]
    cand = []
    for ti, tr in enumerate(tracks):
        for di, det in enumerate(detections):
            if det_cls[di] is not tr.line_class:
                continue
            d = line_distance(tr.line, det, rho_gate, theta_gate)
            if math.isfinite(d):
                cand.append((d, ti, di))
    cand.sort()
    used_t, used_d = set(), set()
    out = Association()
    for _, ti, di in cand:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        out.matches.append((tracks[ti].id, di))
    out.unmatched_tracks = [tr.id for ti, tr in enumerate(tracks) if ti not in used_t]
    out.unmatched_detections = [di for di in range(len(detections)) if di not in used_d]
    return out


def fuse_detections(centroid_lines, skeleton_lines, rho_weights=(2.0, 1.0),
                    theta_weights=(1.0, 2.0), rho_gate=RHO_GATE, theta_gate=THETA_GATE):
    """Merge the two detectors' outputs.

    Lines of the same class within the association gates are paired greedily
    and replaced by a weighted mean (centroid:skeleton weights ``rho_weights``
    on rho and ``theta_weights`` on theta). Unpaired lines pass through.
    """
    cand = []
    for i, c in enumerate(centroid_lines):
        for j, s in enumerate(skeleton_lines):
            if classify_line(c) is not classify_line(s):
                continue
            d = line_distance(c, s, rho_gate, theta_gate)
            if math.isfinite(d):
                cand.append((d, i, j))
    cand.sort()
    used_c, used_s, out = set(), set(), []
    for _, i, j in cand:
        if i in used_c or j in used_s:
            continue
        used_c.add(i)
        used_s.add(j)
        c, s = centroid_lines[i], skeleton_lines[j]
        rho_s, theta_s = s.aligned(c.theta_deg)
        wr_c, wr_s = rho_weights
        wt_c, wt_s = theta_weights
        rho = (wr_c * c.rho + wr_s * rho_s) / (wr_c + wr_s)
        theta = (wt_c * c.theta_deg + wt_s * theta_s) / (wt_c + wt_s)
        out.append(HessianLine(rho, theta, c.votes + s.votes))
    out += [l for i, l in enumerate(centroid_lines) if i not in used_c]
    out += [l for j, l in enumerate(skeleton_lines) if j not in used_s]
    return out


@dataclass(frozen=True)
class Node:
    x: float
    y: float
    vertical_track: int = -1
    horizontal_track: int = -1


def _as_line(obj):
    return obj.line if isinstance(obj, LineTrack) else obj


def _track_id(obj):
    return obj.id if isinstance(obj, LineTrack) else -1


def detect_nodes(verticals, horizontals, bounds, eps=1e-6):
    """Intersections of every vertical/horizontal pair that land in the frame.

    ``bounds`` is ``(width, height)``. Accepts tracks or bare lines.
    """
    w, h = bounds
    nodes = []
    for v in verticals:
        for hz in horizontals:
            p = _as_line(v).intersection(_as_line(hz), eps)
            if p is None:
                continue
            x, y = p
            if 0.0 <= x <= w - 1 and 0.0 <= y <= h - 1:
                nodes.append(Node(x, y, _track_id(v), _track_id(hz)))
    return nodes


class Turn(enum.Enum):
    NONE = "none"
    LEFT = "left"
    RIGHT = "right"


def detect_turn(skeleton, vertical, ratio_threshold=4.0, min_pixels=30, margin=2.0,
                y_range=None):
    """Classify the skeleton around a vertical line as straight, node or L.

    Pixels farther than ``margin`` from the line are counted on each side
    (left/right in the image). A turn is reported toward the heavy side when
    it holds at least ``min_pixels`` and outweighs the other side by
    ``ratio_threshold``. ``y_range=(y0, y1)`` restricts the count to rows
    ``y0 <= y < y1``.
    """
    if not ratio_threshold > 1.0:
        raise InvalidInputError("ratio_threshold must be > 1")
    m = check_mask(skeleton)
    if y_range is not None:
        y0, y1 = (int(max(0, v)) for v in y_range)
        sub = np.zeros_like(m)
        sub[y0:y1] = m[y0:y1]
        m = sub
    ys, xs = np.nonzero(m)
    rho, theta = _as_line(vertical).aligned(0.0)
    t = math.radians(theta)
    d = xs * math.cos(t) + ys * math.sin(t) - rho
    right = int(np.count_nonzero(d > margin))
    left = int(np.count_nonzero(d < -margin))
    big, small = max(left, right), min(left, right)
    if big < min_pixels:
        return Turn.NONE
    if small == 0 or big / small >= ratio_threshold:
        return Turn.LEFT if left > right else Turn.RIGHT
    return Turn.NONE


class LineTracker:
    """Frame-to-frame line tracks.

    Tracks missing for more than ``max_age`` frames are dropped. A new track
    is reported only after ``debounce`` consecutive detections.
    """

    def __init__(self, q=0.5, r=9.0, max_age=5, debounce=2, rho_gate=RHO_GATE,
                 theta_gate=THETA_GATE):
        self.q = check_positive(q, "q", strict=False)
        self.r = check_positive(r, "r")
        self.max_age = int(max_age)
        self.debounce = int(debounce)
        self.rho_gate = rho_gate
        self.theta_gate = theta_gate
        self.tracks = []
        self._next_id = 0

    def reset(self):
        self.tracks = []

    def update(self, detections):
        assoc = associate(self.tracks, detections, self.rho_gate, self.theta_gate)
        by_id = {t.id: t for t in self.tracks}
        for tid, di in assoc.matches:
            tr = by_id[tid]
            tr.state = kalman_update(tr.state, detections[di])
            tr.frames_since_seen = 0
            tr.hits += 1
            tr.confirmed = tr.confirmed or tr.hits >= self.debounce
        for tid in assoc.unmatched_tracks:
            tr = by_id[tid]
            tr.state = kalman_predict(tr.state)
            tr.frames_since_seen += 1
            tr.hits = 0 if not tr.confirmed else tr.hits
        self.tracks = [t for t in self.tracks if t.frames_since_seen <= self.max_age
                       and (t.confirmed or t.frames_since_seen == 0)]
        for di in assoc.unmatched_detections:
            det = detections[di]
            tr = LineTrack(self._next_id, classify_line(det),
                           KalmanLineState.from_line(det, self.q, self.r))
            tr.confirmed = self.debounce <= 1
            self._next_id += 1
            self.tracks.append(tr)
        return self.active()

    def active(self, line_class=None):
        out = [t for t in self.tracks if t.confirmed]
        if line_class is not None:
            out = [t for t in out if t.line_class is line_class]
        return out

    def get(self, track_id):
        for t in self.tracks:
            if t.id == track_id:
                return t
        return None


def frame_record(frame, tracks, nodes, turn):
    """One line of the per-frame track dump."""
    return json.dumps({
        "frame": int(frame),
        "tracks": [t.to_dict() for t in tracks],
        "nodes": [[n.x, n.y] for n in nodes],
        "turn": (turn.value if isinstance(turn, Turn) else str(turn)),
    })
