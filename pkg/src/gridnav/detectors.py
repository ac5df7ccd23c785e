"""Image -> lines estimators for the four detection methods.

All four share the same interface: ``fit(X, y)`` trains the colour
segmenter on labelled HSV samples (optional when a model or HSV box is
supplied), ``predict(img)`` returns a list of :class:`HessianLine` and
``predict_mask(mask)`` runs the geometric stage alone on a ready-made mask.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import InvalidInputError, check_mask, check_raster
from .centroid import (compute_slice_grid, estimate_line_width, extract_centroids,
                       ransac_line_fit)
from .raster import rgb_to_hsv
from .skeleton import HoughParams, cluster_lines, hough_lines, zhang_suen_thin
from .threshold import HsvRange, LineSegmenter, hsv_range_threshold
from .tracking import fuse_detections

__all__ = [
    "DEFAULT_LINE_RANGE",
    "NaiveLineDetector",
    "CentroidLineDetector",
    "SkeletonLineDetector",
    "CombinedLineDetector",
    "make_detector",
    "detect_with_skeleton",
    "METHODS",
]

# yellow tape: hue codes 25..60 (about 35..85 deg), saturated and bright
DEFAULT_LINE_RANGE = HsvRange(25, 60, 90, 255, 90, 255)


class _Base(BaseEstimator):
    def _segmenter(self):
        seg = getattr(self, "segmenter_", None) or self.segmenter
        if seg is None:
            seg = LineSegmenter(hsv_range=DEFAULT_LINE_RANGE)
        return seg

    def fit(self, X, y):
        """Train the colour segmenter on HSV samples ``X`` with labels ``y``."""
        base = self.segmenter if self.segmenter is not None else LineSegmenter()
        params = base.get_params()
        params["model"] = None
        self.segmenter_ = LineSegmenter(**params).fit(X, y)
        return self

    def segment(self, img):
        return self._segmenter().transform(img)

    def predict(self, img):
        return self.predict_mask(self.segment(img))


class CentroidLineDetector(_Base):
    """Slice-centroid + RANSAC detector.

    Parameters
    ----------
    segmenter : LineSegmenter or None
        Colour stage; ``None`` uses the default yellow HSV box.
    k : float
        Slice-count constant of :func:`compute_slice_grid`.
    inlier_tol : float or None
        RANSAC perpendicular tolerance in pixels; ``None`` uses the larger
        of 2 % of the image diagonal and the estimated line width.
    """

    def __init__(self, segmenter=None, k=2.0, inlier_tol=None, max_iters=200,
                 min_consensus=4, random_state=0):
        self.segmenter = segmenter
        self.k = k
        self.inlier_tol = inlier_tol
        self.max_iters = max_iters
        self.min_consensus = min_consensus
        self.random_state = random_state

    def predict_mask(self, mask):
        m = check_mask(mask)
        grid = compute_slice_grid(m, self.k)
        pts = extract_centroids(m, grid, with_area=True)
        if not pts:
            return []
        arr = np.asarray(pts)
        tol = self.inlier_tol
        if tol is None:
            # slice borders split a thick band into pieces up to its width apart
            tol = max(0.02 * math.hypot(*m.shape), estimate_line_width(m))
        return ransac_line_fit(arr[:, :2], tol, self.max_iters, self.random_state,
                               self.min_consensus, weights=arr[:, 2])


class SkeletonLineDetector(_Base):
    """Zhang-Suen thinning, Hough voting and 5-degree clustering."""

    def __init__(self, segmenter=None, hough=None, theta_res=5.0, rho_res=20.0):
        self.segmenter = segmenter
        self.hough = hough
        self.theta_res = theta_res
        self.rho_res = rho_res

    def skeleton(self, mask):
        return zhang_suen_thin(mask)

    def predict_mask(self, mask):
        return self.predict_mask_with_skeleton(mask)[0]

    def predict_mask_with_skeleton(self, mask):
        skel = self.skeleton(mask)
        lines = hough_lines(skel, self.hough or HoughParams())
        return cluster_lines(lines, self.theta_res, self.rho_res), skel


class CombinedLineDetector(_Base):
    """Centroid and skeleton detectors on one mask, fused pairwise."""

    def __init__(self, segmenter=None, centroid=None, skeleton=None):
        self.segmenter = segmenter
        self.centroid = centroid
        self.skeleton = skeleton

    def predict_mask(self, mask):
        return self.predict_mask_with_skeleton(mask)[0]

    def predict_mask_with_skeleton(self, mask):
        m = check_mask(mask)
        c = (self.centroid or CentroidLineDetector()).predict_mask(m)
        s, skel = (self.skeleton or SkeletonLineDetector()).predict_mask_with_skeleton(m)
        return fuse_detections(c, s), skel


def _boundary(mask):
    # set pixels with at least one unset 4-neighbour (image border counts as unset)
    p = np.pad(mask, 1)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return mask & ~interior


class NaiveLineDetector(BaseEstimator):
    """Baseline: fixed HSV box, mask edges, raw Hough peaks.

    No thinning, centroiding, vote re-validation or peak refinement; peaks
    are 3x3 local maxima of the accumulator built over the edge pixels.
    """

    def __init__(self, hsv_range=None, peak_threshold=None, theta_res=5.0, rho_res=20.0):
        self.hsv_range = hsv_range
        self.peak_threshold = peak_threshold
        self.theta_res = theta_res
        self.rho_res = rho_res

    def fit(self, X=None, y=None):
        return self

    def segment(self, img):
        return hsv_range_threshold(rgb_to_hsv(check_raster(img, channels=3)),
                                   self.hsv_range or DEFAULT_LINE_RANGE)

    def predict_mask(self, mask):
        params = HoughParams(peak_threshold=self.peak_threshold, nms_window=(1, 1),
                             refine=False, revalidate=False)
        lines = hough_lines(_boundary(check_mask(mask)), params)
        return cluster_lines(lines, self.theta_res, self.rho_res)

    def predict(self, img):
        return self.predict_mask(self.segment(img))


METHODS = ("naive", "centroid", "skeleton", "combined")


def detect_with_skeleton(detector, mask):
    """``(lines, skeleton)``; the skeleton is thinned here if the detector does not."""
    if hasattr(detector, "predict_mask_with_skeleton"):
        return detector.predict_mask_with_skeleton(mask)
    return detector.predict_mask(mask), zhang_suen_thin(mask)


def make_detector(method, segmenter=None):
    """Detector instance for one of :data:`METHODS`."""
    if method == "naive":
        return NaiveLineDetector()
    if method == "centroid":
        return CentroidLineDetector(segmenter)
    if method == "skeleton":
        return SkeletonLineDetector(segmenter)
    if method == "combined":
        return CombinedLineDetector(segmenter)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")

