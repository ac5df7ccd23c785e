"""Centroid line detection.

The mask is cut into a grid of slices whose count adapts to how much of the
frame the lines cover. Each slice contributes the centroid of its largest
8-connected component; straight lines are then pulled out of the centroid
cloud one at a time with RANSAC.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._labeling import label_runs
from ._validation import InvalidInputError, check_mask, check_positive
from .lines import HessianLine

__all__ = [
    "SliceGrid",
    "Moments",
    "NoCentroidError",
    "compute_slice_grid",
    "largest_component",
    "raw_moments",
    "centroid_of",
    "extract_centroids",
    "ransac_line_fit",
    "fit_line_tls",
    "estimate_line_width",
]

EXHAUSTIVE_LIMIT = 20


class NoCentroidError(ValueError):
    """Raised for an empty region, which has no centroid."""


@dataclass(frozen=True)
class SliceGrid:
    n_height: int
    n_width: int

    def __post_init__(self):
        if self.n_height < 1 or self.n_width < 1:
            raise InvalidInputError(f"slice counts must be >= 1, got {self}")


@dataclass(frozen=True)
class Moments:
    m00: int
    m10: int
    m01: int


def compute_slice_grid(mask, k=2.0, lo=4, hi=32):
    """Slice count ``clamp(round(k / sqrt(coverage)), lo, hi)`` on both axes.

    Sparse (thin or distant) lines get more slices, dense ones fewer. The
    count is further capped at a quarter of the smaller image side.
    """
    m = check_mask(mask)
    cap = max(1, min(m.shape) // 4)
    coverage = np.count_nonzero(m) / m.size
    if coverage == 0.0:
        n = lo
    else:
        n = int(min(max(round(k / math.sqrt(coverage)), lo), hi))
    n = min(n, cap)
    return SliceGrid(n, n)


def _pick_largest(area, first_pixel):
    # max area, ties to the earliest top-left pixel in row-major order
    order = np.lexsort((first_pixel, -area))
    return int(order[0])


def largest_component(sub):
    """Mask of the largest 8-connected component (empty in, empty out)."""
    m = check_mask(sub)
    runs = label_runs(m)
    if runs.n_components == 0:
        return np.zeros_like(m)
    best = _pick_largest(runs.area, runs.first_pixel_index())
    keep = np.zeros(runs.n_components, dtype=np.bool_)
    keep[best] = True
    return runs.paint(keep)


def raw_moments(region):
    """Zeroth and first raw moments of a binary region."""
    m = check_mask(region)
    ys, xs = np.nonzero(m)
    return Moments(int(xs.size), int(xs.sum()), int(ys.sum()))


def centroid_of(m):
    if m.m00 <= 0:
        raise NoCentroidError("region is empty")
    return (m.m10 / m.m00, m.m01 / m.m00)


def _slice_components(mask, grid):
    m = check_mask(mask)
    nh = min(grid.n_height, m.shape[0])
    nw = min(grid.n_width, m.shape[1])
    runs = label_runs(m, nh, nw)
    if runs.n_components == 0:
        return np.empty((0, 3))
    first_run = runs.first_run
    # a component's slice is the slice of its first run
    row_edges = (np.arange(nh + 1) * m.shape[0]) // nh
    rslice = np.searchsorted(row_edges, runs.row[first_run], side="right") - 1
    slice_id = rslice * nw + runs.col_slice[first_run]
    first_px = runs.first_pixel_index()
    # per slice: largest area, then earliest top-left pixel; slice-major order
    order = np.lexsort((first_px, -runs.area, slice_id))
    sid_sorted = slice_id[order]
    head = np.ones(order.size, dtype=bool)
    head[1:] = sid_sorted[1:] != sid_sorted[:-1]
    best = order[head]
    m00 = runs.area[best].astype(np.float64)
    return np.column_stack([runs.m10[best] / m00, runs.m01[best] / m00, m00])


def extract_centroids(mask, grid, with_area=False):
    """Centroid of each slice's largest component, slice-major order.

    Points are in full-image coordinates and slices with no foreground are
    skipped. ``with_area=True`` returns ``(x, y, area)`` triples instead.
    """
    comps = _slice_components(mask, grid)
    if with_area:
        return [(float(x), float(y), float(a)) for x, y, a in comps]
    return [(float(x), float(y)) for x, y, _ in comps]


@njit(cache=True)
def _area_and_edges(mask):
    h, w = mask.shape
    area = 0
    edges = 0
    for y in range(h):
        prev = mask[y, 0]
        area += prev
        for x in range(1, w):
            cur = mask[y, x]
            area += cur
            edges += cur != prev
            prev = cur
        if y:
            for x in range(w):
                edges += mask[y, x] != mask[y - 1, x]
    return area, edges


def estimate_line_width(mask):
    """Band thickness as ``2 * area / edge count``.

    The edge count is the number of set/unset transitions between
    horizontally or vertically adjacent pixels, twice a band's length for an
    axis-aligned band (exact width) and ``2 sqrt(2)`` times it at 45
    degrees (width / sqrt(2)). Returns 0 for an empty mask and the smaller
    image side for a full one.
    """
    m = check_mask(mask)
    area, edges = _area_and_edges(m.view(np.uint8))
    if area == 0:
        return 0.0
    if edges == 0:
        return float(min(m.shape))
    return 2.0 * area / edges


def fit_line_tls(points, weights=None):
    """(Weighted) total-least-squares line through ``points`` (n >= 2)."""
    pts = np.asarray(points, dtype=np.float64)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64)
    c = (w[:, None] * pts).sum(axis=0) / w.sum()
    d = pts - c
    cov = (w[:, None] * d).T @ d
    _, evecs = np.linalg.eigh(cov)
    normal = evecs[:, 0]  # smallest eigenvalue
    theta = math.degrees(math.atan2(normal[1], normal[0]))
    rho = c[0] * normal[0] + c[1] * normal[1]
    return HessianLine(rho, theta, votes=float(len(pts)))


def _pair_lines(pts, pairs):
    p, q = pts[pairs[:, 0]], pts[pairs[:, 1]]
    d = q - p
    norm = np.hypot(d[:, 0], d[:, 1])
    ok = norm > 1e-9
    safe = np.where(ok, norm, 1.0)
    nx = np.where(ok, -d[:, 1] / safe, 0.0)
    ny = np.where(ok, d[:, 0] / safe, 0.0)
    rho = nx * p[:, 0] + ny * p[:, 1]
    return nx, ny, rho, ok


def _best_consensus(pts, pairs, tol, canonical):
    nx, ny, rho, ok = _pair_lines(pts, pairs)
    dist = np.abs(np.outer(nx, pts[:, 0]) + np.outer(ny, pts[:, 1]) - rho[:, None])
    inl = (dist <= tol) & ok[:, None]
    counts = inl.sum(axis=1)
    top = counts.max()
    if top < 2:
        return None
    if not canonical:
        return inl[int(np.argmax(counts))]
    # ties: tightest refit wins, then a canonical point ordering, so the
    # choice depends on the point set and not on its order
    tied = np.unique(inl[counts == top], axis=0)
    if len(tied) == 1:
        return tied[0]
    best_key, best = None, None
    for cand in tied:
        sub = pts[cand]
        line = fit_line_tls(sub)
        resid = float(np.sum(line.signed_distance(sub[:, 0], sub[:, 1]) ** 2))
        key = (round(resid, 9), sorted(map(tuple, sub.round(9).tolist())))
        if best_key is None or key < best_key:
            best_key, best = key, cand
    return best


def ransac_line_fit(points, inlier_tol=5.0, max_iters=200, rng_seed=0, min_consensus=4,
                    weights=None):
    """Extract lines from a point cloud by repeated RANSAC.

    Each round scores two-point hypotheses by how many points fall within
    ``inlier_tol`` (perpendicular distance), refits the winning consensus set
    by total least squares (weighted by ``weights`` when given), removes it,
    and repeats while at least ``min_consensus`` points remain and the best
    consensus reaches ``min_consensus``. Up to 20 points every pair is tried,
    so the result is independent of the seed and of the point order.
    ``votes`` on each returned line is its inlier count.
    """
    check_positive(inlier_tol, "inlier_tol")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        return []
    wts = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    lines = []
    while len(pts) >= min_consensus:
        n = len(pts)
        exhaustive = n <= EXHAUSTIVE_LIMIT
        if exhaustive:
            pairs = np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64)
        else:
            a = rng.integers(0, n, size=max_iters)
            b = (a + rng.integers(1, n, size=max_iters)) % n
            pairs = np.stack([a, b], axis=1)
        inl = _best_consensus(pts, pairs, inlier_tol, exhaustive)
        if inl is None or inl.sum() < min_consensus:
            break
        line = fit_line_tls(pts[inl], wts[inl])
        # one re-scoring pass against the refit line
        final = np.abs(line.signed_distance(pts[:, 0], pts[:, 1])) <= inlier_tol
        if final.sum() >= min_consensus:
            inl = final
            line = fit_line_tls(pts[inl], wts[inl])
        lines.append(line)
        pts, wts = pts[~inl], wts[~inl]
    return lines
