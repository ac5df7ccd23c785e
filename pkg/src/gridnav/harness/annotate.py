"""Overlay detected lines on frames for visual inspection."""

import math

import numpy as np

from .._validation import check_raster

__all__ = ["draw_lines", "side_by_side"]


def draw_lines(img, lines, color=(255, 0, 0), thickness=1):
    """Copy of ``img`` (RGB) with every line painted across the frame."""
    out = check_raster(img, channels=3).copy()
    h, w = out.shape[:2]
    for line in lines:
        t = math.radians(line.theta_deg)
        c, s = math.cos(t), math.sin(t)
        if abs(s) >= abs(c):
            xs = np.arange(w)
            ys = np.rint((line.rho - xs * c) / s).astype(int)
        else:
            ys = np.arange(h)
            xs = np.rint((line.rho - ys * s) / c).astype(int)
        for d in range(-(thickness // 2), thickness - thickness // 2):
            if abs(s) >= abs(c):
                yy, xx = ys + d, xs
            else:
                yy, xx = ys, xs + d
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            out[yy[ok], xx[ok]] = color
    return out


def side_by_side(left, right):
    """Two equally sized RGB frames next to each other."""
    return np.concatenate([check_raster(left, channels=3), check_raster(right, channels=3)], axis=1)
