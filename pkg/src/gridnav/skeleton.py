"""Skeleton line detection: Zhang-Suen thinning, Hough voting, 5-degree clustering."""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._validation import InvalidInputError, check_mask
from .lines import HessianLine, align_theta

__all__ = [
    "HoughParams",
    "zhang_suen_thin",
    "hough_accumulator",
    "hough_lines",
    "cluster_lines",
    "default_peak_threshold",
]

REFERENCE_DIAGONAL = math.hypot(1920, 1080)


# --- thinning -----------------------------------------------------------------

@njit(cache=True)
def _zs_pass(img, cand, ncand, step, dele, inlist):
    """One Zhang-Suen sub-iteration over the candidate list; returns #deleted."""
    nd = 0
    for c in range(ncand):
        y = cand[c, 0]
        x = cand[c, 1]
        if img[y, x] == 0:
            continue
        p2 = img[y - 1, x]
        p3 = img[y - 1, x + 1]
        p4 = img[y, x + 1]
        p5 = img[y + 1, x + 1]
        p6 = img[y + 1, x]
        p7 = img[y + 1, x - 1]
        p8 = img[y, x - 1]
        p9 = img[y - 1, x - 1]
        b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
        if b < 2 or b > 6:
            continue
        a = ((p2 == 0 and p3 == 1) + (p3 == 0 and p4 == 1) + (p4 == 0 and p5 == 1)
             + (p5 == 0 and p6 == 1) + (p6 == 0 and p7 == 1) + (p7 == 0 and p8 == 1)
             + (p8 == 0 and p9 == 1) + (p9 == 0 and p2 == 1))
        if a != 1:
            continue
        if step == 0:
            if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                continue
        else:
            if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                continue
        dele[nd, 0] = y
        dele[nd, 1] = x
        nd += 1
    # a group of deleted pixels touching no survivor was a whole component:
    # keep its first pixel (row-major) so no component disappears
    for d in range(nd):
        img[dele[d, 0], dele[d, 1]] = 2
    kept = 0
    stack = np.empty((nd, 2), np.int64)
    for d in range(nd):
        if img[dele[d, 0], dele[d, 1]] != 2:
            continue
        top = 0
        stack[0, 0] = dele[d, 0]
        stack[0, 1] = dele[d, 1]
        img[dele[d, 0], dele[d, 1]] = 3
        top = 1
        touches = False
        by = dele[d, 0]
        bx = dele[d, 1]
        while top:
            top -= 1
            y = stack[top, 0]
            x = stack[top, 1]
            if y < by or (y == by and x < bx):
                by = y
                bx = x
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    v = img[y + dy, x + dx]
                    if v == 1:
                        touches = True
                    elif v == 2:
                        img[y + dy, x + dx] = 3
                        stack[top, 0] = y + dy
                        stack[top, 1] = x + dx
                        top += 1
        if not touches:
            img[by, bx] = 4
            kept += 1
    for d in range(nd):
        y = dele[d, 0]
        x = dele[d, 1]
        img[y, x] = 1 if img[y, x] == 4 else 0
    return nd - kept


@njit(cache=True)
def _zs_thin(img):
    """Thin a zero-padded uint8 {0,1} image in place."""
    h, w = img.shape
    inlist = np.zeros((h, w), np.uint8)
    ncand = 0
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            if img[y, x] and (img[y - 1, x] == 0 or img[y + 1, x] == 0 or img[y, x - 1] == 0
                              or img[y, x + 1] == 0 or img[y - 1, x - 1] == 0
                              or img[y - 1, x + 1] == 0 or img[y + 1, x - 1] == 0
                              or img[y + 1, x + 1] == 0):
                ncand += 1
    cand = np.empty((max(ncand, 1), 2), np.int64)
    ncand = 0
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            if img[y, x] and (img[y - 1, x] == 0 or img[y + 1, x] == 0 or img[y, x - 1] == 0
                              or img[y, x + 1] == 0 or img[y - 1, x - 1] == 0
                              or img[y - 1, x + 1] == 0 or img[y + 1, x - 1] == 0
                              or img[y + 1, x + 1] == 0):
                cand[ncand, 0] = y
                cand[ncand, 1] = x
                inlist[y, x] = 1
                ncand += 1
    dele = np.empty_like(cand)
    while True:
        changed = 0
        for step in range(2):
            if dele.shape[0] < ncand:
                dele = np.empty((ncand, 2), np.int64)
            nd = _zs_pass(img, cand, ncand, step, dele, inlist)
            changed += nd
            if nd == 0:
                continue
            # survivors stay candidates; set neighbours of deleted pixels join
            grown = np.empty((ncand + 8 * nd, 2), np.int64)
            m = 0
            for c in range(ncand):
                y = cand[c, 0]
                x = cand[c, 1]
                if img[y, x]:
                    grown[m, 0] = y
                    grown[m, 1] = x
                    m += 1
                else:
                    inlist[y, x] = 0
            for d in range(nd):
                y0 = dele[d, 0]
                x0 = dele[d, 1]
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        yy = y0 + dy
                        xx = x0 + dx
                        if img[yy, xx] and inlist[yy, xx] == 0 and 0 < yy < h - 1 and 0 < xx < w - 1:
                            inlist[yy, xx] = 1
                            grown[m, 0] = yy
                            grown[m, 1] = xx
                            m += 1
            cand = grown
            ncand = m
        if changed == 0:
            break


def zhang_suen_thin(mask):
    """Zhang-Suen thinning until no pixel changes.

    Pixels outside the image count as background. The result is a subset of
    the input. The parallel rule erases some tiny components outright (a
    2x2 block, for one); such a component keeps its first pixel instead.
    """
    m = check_mask(mask)
    h, w = m.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = m
    _zs_thin(padded)
    return padded[1:-1, 1:-1].astype(np.bool_)


# --- Hough --------------------------------------------------------------------

@dataclass(frozen=True)
class HoughParams:
    """Accumulator resolution and peak picking.

    ``peak_threshold=None`` scales 30 votes at 1920x1080 with the image
    diagonal. ``nms_window`` is the half-size ``(rho cells, theta cells)`` of
    the non-maximum suppression box. ``refine`` replaces each peak's cell
    centre by a least-squares fit to the pixels within ``refine_band`` of it.
    """

    theta_step: float = 1.0
    rho_step: float = 1.0
    peak_threshold: float | None = None
    nms_window: tuple = (10, 5)
    refine: bool = True
    refine_band: float = 2.0
    revalidate: bool = True
    max_lines: int = 64

    def __post_init__(self):
        if self.theta_step <= 0 or self.rho_step <= 0:
            raise InvalidInputError("Hough steps must be > 0")
        if self.peak_threshold is not None and self.peak_threshold < 2:
            raise InvalidInputError("peak_threshold must be >= 2")
        n = 180.0 / self.theta_step
        if abs(n - round(n)) > 1e-9:
            raise InvalidInputError("theta_step must divide 180")


def default_peak_threshold(shape, at_reference=30.0):
    h, w = shape[:2]
    return max(2.0, at_reference * math.hypot(w, h) / REFERENCE_DIAGONAL)


@njit(cache=True)
def _accumulate(ys, xs, cos_t, sin_t, n_half, rho_step, acc):
    for i in range(ys.shape[0]):
        x = xs[i]
        y = ys[i]
        for k in range(cos_t.shape[0]):
            r = x * cos_t[k] + y * sin_t[k]
            j = int(math.floor(r / rho_step + 0.5)) + n_half
            acc[j, k] += 1


@njit(cache=True)
def _local_maxima(acc, thresh, wr, wt):
    n_rho, n_t = acc.shape
    out = []
    for j in range(n_rho):
        for k in range(n_t):
            v = acc[j, k]
            if v < thresh:
                continue
            is_max = True
            for dk in range(-wt, wt + 1):
                kk = k + dk
                mirror = False
                if kk < 0:
                    kk += n_t
                    mirror = True
                elif kk >= n_t:
                    kk -= n_t
                    mirror = True
                for dj in range(-wr, wr + 1):
                    jj = j + dj
                    if mirror:
                        jj = n_rho - 1 - jj
                    if jj < 0 or jj >= n_rho or (dj == 0 and dk == 0):
                        continue
                    u = acc[jj, kk]
                    # equal neighbours: the one earlier in scan order wins
                    if u > v or (u == v and (jj * n_t + kk) < (j * n_t + k)):
                        is_max = False
                        break
                if not is_max:
                    break
            if is_max:
                out.append((v, j, k))
    return out


@njit(cache=True)
def _set_pixels(mask):
    n = 0
    h, w = mask.shape
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                n += 1
    xs = np.empty(n, np.float64)
    ys = np.empty(n, np.float64)
    i = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                xs[i] = x
                ys[i] = y
                i += 1
    return xs, ys


def hough_accumulator(mask, theta_step=1.0, rho_step=1.0, _points=None):
    """Vote array of shape ``(n_rho, n_theta)`` plus its rho and theta axes."""
    m = check_mask(mask)
    h, w = m.shape
    n_t = int(round(180.0 / theta_step))
    thetas = np.arange(n_t) * theta_step
    rad = np.deg2rad(thetas)
    n_half = int(math.ceil(math.hypot(w, h) / rho_step))
    rhos = (np.arange(2 * n_half + 1) - n_half) * rho_step
    acc = np.zeros((2 * n_half + 1, n_t), dtype=np.int32)
    xs, ys = _set_pixels(m) if _points is None else _points
    if ys.size:
        _accumulate(ys, xs, np.cos(rad), np.sin(rad), n_half, float(rho_step), acc)
    return acc, rhos, thetas


def _refine(line, xs, ys, band, rounds=3):
    from .centroid import fit_line_tls

    for _ in range(rounds):
        d = np.abs(line.signed_distance(xs, ys))
        sel = d <= band
        if sel.sum() < 2:
            break
        fit = fit_line_tls(np.column_stack([xs[sel], ys[sel]]))
        rho, theta = fit.aligned(line.theta_deg)
        line = HessianLine(rho, theta, line.votes)
    return line


def hough_lines(mask, params=None):
    """Accumulator peaks as lines, strongest first.

    Standard ``(rho, theta)`` voting over the set pixels, theta in [0, 180),
    rho in [-diag, diag]. Peaks are cells at or above the vote threshold
    that dominate their NMS window (the window wraps across theta = 0/180
    with rho mirrored).
    """
    params = params or HoughParams()
    m = check_mask(mask)
    xs, ys = _set_pixels(m)
    acc, rhos, thetas = hough_accumulator(m, params.theta_step, params.rho_step, (xs, ys))
    thresh = params.peak_threshold
    if thresh is None:
        thresh = default_peak_threshold(m.shape)
    wr, wt = (int(v) for v in params.nms_window)
    peaks = _local_maxima(acc, int(math.ceil(thresh)), wr, wt)
    peaks.sort(key=lambda p: (-p[0], p[1], p[2]))
    if not peaks:
        return []
    if not (params.refine or params.revalidate):
        return [HessianLine(rhos[j], thetas[k], float(v)) for v, j, k in peaks[: params.max_lines]]

    claimed = np.zeros(xs.shape[0], dtype=bool)
    half_cell = 0.5 * params.rho_step
    lines = []
    for v, j, k in peaks:
        if len(lines) >= params.max_lines:
            break
        line = HessianLine(rhos[j], thetas[k], float(v))
        if params.revalidate:
            own = (np.abs(line.signed_distance(xs, ys)) <= half_cell) & ~claimed
            votes = int(own.sum())
            if votes < thresh:
                continue
            line = HessianLine(line.rho, line.theta_deg, float(votes))
        if params.refine:
            free = ~claimed if params.revalidate else slice(None)
            line = _refine(line, xs[free], ys[free], params.refine_band)
        if params.revalidate:
            claimed |= np.abs(line.signed_distance(xs, ys)) <= params.refine_band
        lines.append(line)
    lines.sort(key=lambda l: -l.votes)
    return lines


# --- clustering ---------------------------------------------------------------

def _weighted_mean(members):
    wts = np.array([max(l.votes, 1e-12) for l in members])
    two = np.deg2rad([2.0 * l.theta_deg for l in members])
    theta = 0.5 * math.degrees(math.atan2((wts * np.sin(two)).sum(), (wts * np.cos(two)).sum()))
    rho = sum(w * l.aligned(theta)[0] for w, l in zip(wts, members)) / wts.sum()
    return HessianLine(rho, theta, float(wts.sum()))


def cluster_lines(lines, theta_res=5.0, rho_res=20.0):
    """Greedy vote-weighted agglomeration of near-duplicate lines.

    Lines are visited strongest first; each joins the first cluster whose
    current mean is within ``theta_res`` (circular, period 180) and
    ``rho_res``, otherwise it starts a new cluster. Means average theta
    through the double-angle embedding.
    """
    if theta_res <= 0 or rho_res <= 0:
        raise InvalidInputError("theta_res and rho_res must be > 0")
    order = sorted(lines, key=lambda l: -l.votes)
    clusters = []
    for line in order:
        for cl in clusters:
            mean = cl["mean"]
            rho, theta = align_theta(line.rho, line.theta_deg, mean.theta_deg)
            if abs(theta - mean.theta_deg) <= theta_res and abs(rho - mean.rho) <= rho_res:
                cl["members"].append(line)
                cl["mean"] = _weighted_mean(cl["members"])
                break
        else:
            clusters.append({"members": [line], "mean": line})
    return [cl["mean"] for cl in clusters]
