"""Downward pinhole camera over the flat warehouse floor.

Camera axes: image x to the drone's right, image y toward its tail, optical
axis down. The drone's yaw turns the camera about the world Z axis
(counter-clockwise positive); roll (right side down) and pitch (nose up)
tilt it so that the image content moves by ``+f tan(roll)`` along x and
``+f tan(pitch)`` along y at the image centre. The principal point is
``(w/2, h/2)`` with pixel centres at integer coordinates.

Floor points and pixels are related by the homography ``G`` (pixel ->
floor); image-space ground-truth lines are exact because a homography maps
lines to lines: ``l_img = l_floor^T G``.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .._validation import InvalidInputError
from ..lines import HessianLine
from ..raster import hsv_to_rgb, perturb
from ..tracking import Node

__all__ = [
    "Pose",
    "CameraIntrinsics",
    "PerturbConfig",
    "GroundTruthFrame",
    "camera_rotation",
    "pixel_to_floor",
    "floor_to_pixel",
    "image_line",
    "render_camera",
]

MAX_TILT = 10.0


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    altitude_h: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not self.altitude_h > 0:
            raise InvalidInputError(f"altitude_h must be > 0, got {self.altitude_h}")
        if abs(self.roll) > MAX_TILT + 1e-9 or abs(self.pitch) > MAX_TILT + 1e-9:
            raise InvalidInputError(f"|roll|, |pitch| must be <= {MAX_TILT} deg")

    def to_dict(self):
        return {"x": self.x, "y": self.y, "altitude_h": self.altitude_h,
                "roll": self.roll, "pitch": self.pitch, "yaw": self.yaw}


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float
    width: int
    height: int

    @classmethod
    def from_fov(cls, sigma_deg, width, height):
        """Horizontal field of view ``sigma`` spans the image width."""
        return cls((width / 2.0) / math.tan(math.radians(sigma_deg) / 2.0), int(width), int(height))

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or not self.focal_px > 0:
            raise InvalidInputError("intrinsics need width, height >= 1 and focal_px > 0")

    @property
    def K(self):
        return np.array([[self.focal_px, 0.0, self.width / 2.0],
                         [0.0, self.focal_px, self.height / 2.0],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class PerturbConfig:
    """Rendering perturbations; applied to the image only, never to ground truth."""

    blur_sigma: float = 0.0
    brightness_gain: float = 1.0
    noise_sigma: float = 0.0
    speck_fraction: float = 0.0
    occlusions: int = 0
    occlusion_size: float = 0.08

    @classmethod
    def from_dict(cls, d):
        return cls(**(d or {}))


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


# camera axes (x right, y tail, z down) expressed in the world at zero yaw
_R0 = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def camera_rotation(pose):
    """World-from-camera rotation for ``pose``."""
    att = _rx(math.radians(pose.pitch)) @ _ry(-math.radians(pose.roll))
    return _rz(math.radians(pose.yaw)) @ _R0 @ att


def _pixel_to_floor_h(pose, intr):
    M = camera_rotation(pose) @ np.linalg.inv(intr.K)
    H = pose.altitude_h
    # ray d = M [u v 1] meets the floor at C - H d / d_z; scaled by -d_z:
    G = np.empty((3, 3))
    G[0] = H * M[0] - pose.x * M[2]
    G[1] = H * M[1] - pose.y * M[2]
    G[2] = -M[2]
    return G


def pixel_to_floor(pose, intr, u, v):
    G = _pixel_to_floor_h(pose, intr)
    p = G @ np.array([u, v, 1.0])
    return p[0] / p[2], p[1] / p[2]


def floor_to_pixel(pose, intr, X, Y):
    Gi = np.linalg.inv(_pixel_to_floor_h(pose, intr))
    p = Gi @ np.array([X, Y, 1.0])
    return p[0] / p[2], p[1] / p[2]


def image_line(world_line, pose, intr):
    """Image :class:`HessianLine` of the floor line ``a X + b Y + c = 0``."""
    return _line_through_h(world_line, _pixel_to_floor_h(pose, intr))


def _line_through_h(world_line, G):
    a, b, c = np.asarray(world_line, dtype=float) @ G
    n = math.hypot(a, b)
    return HessianLine(-c / n, math.degrees(math.atan2(b, a)))


@njit(cache=True)
def _rasterise(G, seg, patch, palette, img, mask, counts):
    """Per pixel: floor point via ``G``, then the topmost painted primitive.

    ``seg`` rows: x0, y0, ux, uy, length, half_width. ``patch`` rows: x0,
    y0, x1, y1, palette index. Lines (palette index 1) paint over patches;
    the floor is index 0. ``counts[i]`` receives segment ``i``'s pixel count.
    """
    h, w = mask.shape
    ns = seg.shape[0]
    npch = patch.shape[0]
    for v in range(h):
        for u in range(w):
            zz = G[2, 0] * u + G[2, 1] * v + G[2, 2]
            X = (G[0, 0] * u + G[0, 1] * v + G[0, 2]) / zz
            Y = (G[1, 0] * u + G[1, 1] * v + G[1, 2]) / zz
            lab = -1
            for i in range(ns):
                dx = X - seg[i, 0]
                dy = Y - seg[i, 1]
                t = dx * seg[i, 2] + dy * seg[i, 3]
                if t < -seg[i, 5] or t > seg[i, 4] + seg[i, 5]:
                    continue
                if abs(dx * seg[i, 3] - dy * seg[i, 2]) <= seg[i, 5]:
                    lab = i
                    break
            kind = 0
            if lab >= 0:
                kind = 1
                counts[lab] += 1
            else:
                for j in range(npch):
                    if patch[j, 0] <= X <= patch[j, 2] and patch[j, 1] <= Y <= patch[j, 3]:
                        kind = int(patch[j, 4])
                        break
            mask[v, u] = lab >= 0
            for ch in range(3):
                img[v, u, ch] = palette[kind, ch]


@dataclass
class GroundTruthFrame:
    rendered: np.ndarray
    mask: np.ndarray
    lines: list
    line_kinds: list
    nodes: list
    node_ids: list
    pose: Pose
    intrinsics: CameraIntrinsics
    segment_ids: list = field(default_factory=list)

    def sidecar(self):
        """JSON-ready ground truth (no pixels)."""
        return {
            "pose": self.pose.to_dict(),
            "intrinsics": {"focal_px": self.intrinsics.focal_px, "width": self.intrinsics.width,
                           "height": self.intrinsics.height},
            "lines": [dict(l.to_dict(), kind=k) for l, k in zip(self.lines, self.line_kinds)],
            "nodes": [{"id": i, "x": n.x, "y": n.y} for i, n in zip(self.node_ids, self.nodes)],
        }


def _footprint_radius(pose, intr):
    corners = [pixel_to_floor(pose, intr, u, v)
               for u, v in ((0, 0), (intr.width, 0), (0, intr.height), (intr.width, intr.height))]
    return max(math.hypot(x - pose.x, y - pose.y) for x, y in corners)


@functools.lru_cache(maxsize=64)
def _palette(colors):
    hsv = np.array([colors], dtype=np.uint8)
    return hsv_to_rgb(hsv)[0]


def render_camera(world, pose, intr, perturb_cfg=None, rng_seed=0, min_visible=None):
    """Render the floor under ``pose`` and attach exact ground truth.

    Ground-truth lines are the segments with at least ``min_visible`` line
    pixels in view (default: a line width times 10 % of the smaller image
    side), as exact image-space :class:`HessianLine` parameters. Nodes are the
    world nodes whose floor position projects inside the frame.
    """
    spec = world.spec
    G = _pixel_to_floor_h(pose, intr)
    reach = _footprint_radius(pose, intr) + spec.d_x
    segs, seg_objs = [], []
    for s in world.segments:
        (x0, y0), (x1, y1) = s.p0, s.p1
        L = math.hypot(x1 - x0, y1 - y0)
        ux, uy = (x1 - x0) / L, (y1 - y0) / L
        # skip segments whose closest point is beyond the footprint
        t = min(max((pose.x - x0) * ux + (pose.y - y0) * uy, 0.0), L)
        if math.hypot(x0 + t * ux - pose.x, y0 + t * uy - pose.y) > reach:
            continue
        segs.append((x0, y0, ux, uy, L, s.width / 2.0))
        seg_objs.append(s)
    kinds = {"shelf": 2, "start": 3, "end": 3}
    patches = [(p.rect[0], p.rect[1], p.rect[2], p.rect[3], kinds[p.kind]) for p in world.patches]
    seg_arr = np.array(segs, dtype=np.float64).reshape(-1, 6)
    patch_arr = np.array(patches, dtype=np.float64).reshape(-1, 5)
    palette = _palette(tuple(tuple(int(v) for v in c) for c in (
        spec.floor_color, spec.line_color, spec.shelf_color, spec.marker_color)))
    img = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
    mask = np.empty((intr.height, intr.width), dtype=np.bool_)
    counts = np.zeros(len(seg_objs), dtype=np.int64)
    _rasterise(G, seg_arr, patch_arr, palette, img, mask, counts)

    pc = perturb_cfg or PerturbConfig()
    rng = np.random.default_rng(rng_seed)
    if pc.occlusions:
        for _ in range(int(pc.occlusions)):
            ow = max(1, int(pc.occlusion_size * intr.width * rng.uniform(0.5, 1.5)))
            oh = max(1, int(pc.occlusion_size * intr.height * rng.uniform(0.5, 1.5)))
            ox = int(rng.integers(0, max(1, intr.width - ow)))
            oy = int(rng.integers(0, max(1, intr.height - oh)))
            shade = rng.integers(20, 70)
            img[oy:oy + oh, ox:ox + ow] = shade
    if pc.speck_fraction > 0:
        n = int(pc.speck_fraction * intr.width * intr.height)
        ys = rng.integers(0, intr.height, n)
        xs = rng.integers(0, intr.width, n)
        img[ys, xs] = np.where(rng.random(n) < 0.5, 0, 255)[:, None]
    if pc.blur_sigma > 0 or pc.brightness_gain != 1.0 or pc.noise_sigma > 0:
        img = perturb(img, pc.blur_sigma, pc.brightness_gain, int(rng.integers(0, 2**31)),
                      pc.noise_sigma)

    if min_visible is None:
        width_px = spec.line_width * intr.focal_px / pose.altitude_h
        min_visible = width_px * 0.1 * min(intr.width, intr.height)
    lines, line_kinds, seg_ids = [], [], []
    for i, s in enumerate(seg_objs):
        if counts[i] >= min_visible:
            lines.append(_line_through_h(s.world_line, G))
            line_kinds.append(s.kind)
            seg_ids.append(world.segments.index(s))
    nodes, node_ids = [], []
    Gi = np.linalg.inv(G)
    for nid in world.node_ids:
        X, Y = world.nodes[nid]
        q = Gi @ np.array([X, Y, 1.0])
        u, v = q[0] / q[2], q[1] / q[2]
        if 0 <= u <= intr.width - 1 and 0 <= v <= intr.height - 1:
            nodes.append(Node(u, v))
            node_ids.append(nid)
    return GroundTruthFrame(img, mask, lines, line_kinds, nodes, node_ids, pose, intr, seg_ids)
