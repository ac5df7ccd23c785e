"""Warehouse floor layout.

World frame: X east, Y north, Z up, floor at Z = 0, metres. Shelf row ``r``
has its vertical guide line along +Y at ``X = r * row_spacing``; node ``k``
of that row sits at ``Y = y0 + k * d_x`` and has id ``r * nodes_per_row + k``.
Each node is crossed by a horizontal stub of half-length ``d_y``; the
shelf face is a further ``d_y`` beyond the stub end. Consecutive rows are
joined by a connector line beyond the row ends (alternating top/bottom),
which forms an L-turn at each end.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .._validation import InvalidInputError

__all__ = [
    "InvalidSpecError",
    "WorldSpec",
    "Segment",
    "Patch",
    "World",
    "generate_world",
    "fov_node_spacing",
]


class InvalidSpecError(InvalidInputError):
    """World parameters break a layout constraint."""


def fov_node_spacing(d_y, sigma_deg):
    """Node spacing whose front-camera views tile the shelf: ``2 d_y tan(sigma/2)``."""
    return 2.0 * d_y * math.tan(math.radians(sigma_deg) / 2.0)


@dataclass(frozen=True)
class WorldSpec:
    """Grid geometry and colours (HSV triples on the 8-bit full-hue scale).

    ``d_x`` must equal ``2 d_y tan(sigma/2)`` to 1e-6 relative error; use
    :meth:`from_fov` to derive it.
    """

    d_x: float
    d_y: float
    sigma: float
    shelf_rows: int = 1
    nodes_per_row: int = 4
    line_width: float = 0.1
    line_color: tuple = (42, 230, 235)
    floor_color: tuple = (150, 20, 120)
    shelf_color: tuple = (20, 120, 60)
    marker_color: tuple = (170, 200, 210)
    first_node_offset: float | None = None
    shelf_depth: float = 1.0
    draw_lines: bool = True

    def __post_init__(self):
        if not (0.0 < self.sigma < 180.0):
            raise InvalidSpecError(f"sigma must be in (0, 180) deg, got {self.sigma}")
        if self.d_y <= 0 or self.d_x <= 0:
            raise InvalidSpecError("d_x and d_y must be > 0")
        expected = fov_node_spacing(self.d_y, self.sigma)
        if abs(self.d_x - expected) > 1e-6 * abs(expected):
            raise InvalidSpecError(
                f"d_x={self.d_x} violates d_x = 2 d_y tan(sigma/2) = {expected}")
        if self.shelf_rows < 0 or self.nodes_per_row < 0:
            raise InvalidSpecError("row and node counts must be >= 0")
        if not 0 < self.line_width < self.d_x:
            raise InvalidSpecError("line_width must be positive and below d_x")
        off = self.offset
        if not 0 <= off <= self.d_x / 2.0 + 1e-12:
            raise InvalidSpecError(f"first_node_offset {off} must lie in [0, d_x/2]")

    @classmethod
    def from_fov(cls, d_y, sigma, **kw):
        return cls(d_x=fov_node_spacing(d_y, sigma), d_y=d_y, sigma=sigma, **kw)

    @property
    def offset(self):
        return self.d_x / 2.0 if self.first_node_offset is None else float(self.first_node_offset)

    @property
    def row_spacing(self):
        return 4.0 * self.d_y + self.shelf_depth

    def to_dict(self):
        d = asdict(self)
        for k in ("line_color", "floor_color", "shelf_color", "marker_color"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "d_x" not in d:
            return cls.from_fov(d.pop("d_y"), d.pop("sigma"), **_tuple_colors(d))
        return cls(**_tuple_colors(d))


def _tuple_colors(d):
    return {k: (tuple(v) if k.endswith("_color") else v) for k, v in d.items()}


@dataclass(frozen=True)
class Segment:
    """A painted strip from ``p0`` to ``p1`` (metres) of the given width."""

    p0: tuple
    p1: tuple
    width: float
    kind: str  # "vertical" | "horizontal" | "connector"
    row: int = -1
    node: int = -1

    @property
    def world_line(self):
        """Homogeneous ``(a, b, c)`` with ``a X + b Y + c = 0``."""
        (x0, y0), (x1, y1) = self.p0, self.p1
        a, b = y1 - y0, x0 - x1
        n = math.hypot(a, b)
        return np.array([a / n, b / n, -(a * x0 + b * y0) / n])


@dataclass(frozen=True)
class Patch:
    """Axis-aligned floor rectangle ``(x0, y0, x1, y1)`` painted one colour."""

    rect: tuple
    kind: str  # "shelf" | "start" | "end"


@dataclass
class World:
    spec: WorldSpec
    segments: list = field(default_factory=list)
    patches: list = field(default_factory=list)
    nodes: dict = field(default_factory=dict)  # id -> (X, Y)
    corners: list = field(default_factory=list)  # (X, Y) of L-turns
    start: tuple = (0.0, 0.0)
    start_heading: float = 0.0  # yaw (deg) facing along row 0
    seed: int = 0

    @property
    def node_ids(self):
        return sorted(self.nodes)

    def row_of(self, node_id):
        return node_id // max(1, self.spec.nodes_per_row)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "nodes": {str(k): list(v) for k, v in sorted(self.nodes.items())},
            "corners": [list(c) for c in self.corners],
            "start": list(self.start),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def generate_world(spec, rng_seed=0):
    """Lay out lines, nodes, shelves and start/end markers for ``spec``.

    The layout is fully determined by ``spec``; the seed is recorded for
    provenance and used only for the small lateral jitter of the start pose
    (up to a quarter line width) so that repeated missions are not all
    perfectly centred.
    """
    if not isinstance(spec, WorldSpec):
        raise InvalidSpecError("spec must be a WorldSpec")
    rng = np.random.default_rng(rng_seed)
    n, rows = spec.nodes_per_row, spec.shelf_rows
    dx, dy, lw = spec.d_x, spec.d_y, spec.line_width
    y0 = 0.0
    y_last = y0 + (n - 1) * dx if n else y0
    shelf_lo, shelf_hi = y0 - spec.offset, y_last + spec.offset
    start_y = y0 - spec.offset
    run_in = 1.0
    y_conn_top = y_last + 0.75 * dx
    y_conn_bottom = y0 - 0.75 * dx
    world = World(spec=spec, seed=int(rng_seed))
    if rows == 0 or n == 0:
        world.start = (0.0, start_y)
        return world

    for r in range(rows):
        xr = r * spec.row_spacing
        for k in range(n):
            nid = r * n + k
            yk = y0 + k * dx
            world.nodes[nid] = (xr, yk)
            if spec.draw_lines:
                world.segments.append(Segment((xr - dy, yk), (xr + dy, yk), lw, "horizontal", r, nid))
        # even rows are flown toward +Y, odd rows toward -Y; each row starts at
        # the previous connector (row 0: at the start marker) and ends at the
        # next connector (last row: open end past its last node)
        open_lo, open_hi = start_y - run_in, y_last + spec.offset + run_in
        if r % 2 == 0:
            lo = open_lo if r == 0 else y_conn_bottom
            hi = y_conn_top if r < rows - 1 else open_hi
        else:
            hi = y_conn_top
            lo = y_conn_bottom if r < rows - 1 else open_lo
        if spec.draw_lines:
            world.segments.append(Segment((xr, lo), (xr, hi), lw, "vertical", r))
    for r in range(rows - 1):
        x_a, x_b = r * spec.row_spacing, (r + 1) * spec.row_spacing
        yc = y_conn_top if r % 2 == 0 else y_conn_bottom
        if spec.draw_lines:
            world.segments.append(Segment((x_a, yc), (x_b, yc), lw, "connector", r))
        world.corners += [(x_a, yc), (x_b, yc)]

    # shelves: one block beyond the stub ends of every row (and between rows)
    for r in range(rows):
        xr = r * spec.row_spacing
        sx = xr + 2.0 * dy
        world.patches.append(Patch((sx, shelf_lo, sx + spec.shelf_depth, shelf_hi), "shelf"))
    if rows == 1:
        sx = -2.0 * dy - spec.shelf_depth
        world.patches.append(Patch((sx, shelf_lo, sx + spec.shelf_depth, shelf_hi), "shelf"))

    m = 0.2
    world.patches.append(Patch((-m - 3 * lw, start_y - m, -3 * lw, start_y + m), "start"))
    last_row = rows - 1
    end_x = last_row * spec.row_spacing
    end_y = (y_last + spec.offset) if last_row % 2 == 0 else start_y
    world.patches.append(Patch((end_x + 3 * lw, end_y - m, end_x + 3 * lw + m, end_y + m), "end"))
    jitter = float(rng.uniform(-0.25, 0.25)) * lw
    world.start = (jitter, start_y)
    world.start_heading = 0.0
    return world
