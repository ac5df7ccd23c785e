"""Guide-line colour segmentation.

A linear max-margin classifier over HSV pixels (trained with Pegasos-style
stochastic sub-gradient steps on the regularised hinge loss) marks candidate
line pixels; region growing then keeps the connected bands large enough to be
lines. A fixed HSV box with hue wrap-around is the non-learned fallback.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._labeling import label_runs
from ._validation import InvalidInputError, check_mask, check_positive, check_raster
from .raster import rgb_to_hsv

__all__ = [
    "ClassifierModel",
    "HsvRange",
    "train_pixel_classifier",
    "hinge_objective",
    "classify_pixels",
    "region_grow",
    "hsv_range_threshold",
    "default_min_seed_area",
    "PixelClassifier",
    "LineSegmenter",
    "read_samples_jsonl",
    "write_samples_jsonl",
]

REFERENCE_PIXELS = 1920 * 1080


@dataclass
class ClassifierModel:
    """Weights over the scaled features ``(h/255, s/255, v/255, 1)``."""

    weights: np.ndarray
    trained_epochs: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape != (4,):
            raise InvalidInputError(f"weights must have 4 entries, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite")
        self.weights = w
        self.trained_epochs = int(self.trained_epochs)

    def decision(self, hsv):
        x = _features(hsv)
        return x @ self.weights

    def to_json(self):
        return json.dumps({"weights": [float(v) for v in self.weights], "epochs": self.trained_epochs})

    @classmethod
    def from_json(cls, text):
        rec = json.loads(text)
        return cls(rec["weights"], rec.get("epochs", 0))


def _features(hsv):
    hsv = np.asarray(hsv, dtype=np.float64).reshape(-1, 3) / 255.0
    return np.hstack([hsv, np.ones((hsv.shape[0], 1))])


@njit(cache=True)
def _pegasos(X, y, order, reg, w, t0):
    t = t0
    for i in order:
        t += 1
        eta = 1.0 / (reg * t)
        margin = y[i] * (X[i, 0] * w[0] + X[i, 1] * w[1] + X[i, 2] * w[2] + X[i, 3] * w[3])
        shrink = 1.0 - eta * reg
        for k in range(4):
            w[k] *= shrink
        if margin < 1.0:
            for k in range(4):
                w[k] += eta * y[i] * X[i, k]
        # projection onto the ball that contains the optimum
        norm = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3])
        radius = 1.0 / math.sqrt(reg)
        if norm > radius:
            for k in range(4):
                w[k] *= radius / norm
    return t


def hinge_objective(weights, X_hsv, y, reg):
    """``reg/2 * |w|^2 + mean(max(0, 1 - y w.x))`` on scaled features."""
    w = np.asarray(weights, dtype=np.float64)
    margins = np.asarray(y, dtype=np.float64) * (_features(X_hsv) @ w)
    return 0.5 * reg * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def train_pixel_classifier(positives, negatives, epochs=20, reg=1e-3, rng_seed=0):
    """Train a linear HSV pixel classifier.

    Parameters
    ----------
    positives, negatives : array-like of shape (n, 3)
        HSV triples on the 8-bit scale.
    epochs : int
        Passes over the shuffled training set.
    reg : float
        L2 regularisation strength (lambda).
    rng_seed : int
        Seed for the per-epoch shuffles.
    """
    pos = np.asarray(positives, dtype=np.float64).reshape(-1, 3)
    neg = np.asarray(negatives, dtype=np.float64).reshape(-1, 3)
    if len(pos) == 0 or len(neg) == 0:
        raise InvalidInputError("both positive and negative samples are required")
    reg = check_positive(reg, "reg")
    X = _features(np.vstack([pos, neg]))
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    rng = np.random.default_rng(rng_seed)
    w = np.zeros(4)
    t = 0
    for _ in range(int(epochs)):
        t = _pegasos(X, y, rng.permutation(len(y)), reg, w, t)
    return ClassifierModel(w, int(epochs))


@njit(cache=True)
def _classify_hsv_kernel(hsv, w, out):
    h, wd = out.shape
    s = 1.0 / 255.0
    for y in range(h):
        for x in range(wd):
            d = (hsv[y, x, 0] * w[0] + hsv[y, x, 1] * w[1] + hsv[y, x, 2] * w[2]) * s + w[3]
            out[y, x] = d > 0.0


def classify_pixels(img_hsv, model):
    """Bit set where the classifier decision is strictly positive."""
    hsv = check_raster(img_hsv, channels=3, name="img_hsv")
    out = np.empty(hsv.shape[:2], dtype=np.bool_)
    _classify_hsv_kernel(hsv, np.asarray(model.weights, dtype=np.float64), out)
    return out


def default_min_seed_area(shape, at_reference=64):
    """Minimum component area scaled from its value at 1920x1080."""
    h, w = shape[:2]
    return max(1, int(round(at_reference * (h * w) / REFERENCE_PIXELS)))


@njit(cache=True)
def _fill_single_holes(out, row, x0, x1, label, keep):
    h, w = out.shape
    for i in range(row.shape[0] - 1):
        j = i + 1
        if row[j] != row[i] or not keep[label[i]] or not keep[label[j]]:
            continue
        if x0[j] != x1[i] + 1:
            continue
        y = row[i]
        x = x1[i]
        if 0 < y < h - 1 and out[y - 1, x] and out[y + 1, x]:
            out[y, x] = True


def region_grow(mask, min_seed_area=None):
    """Keep 8-connected components of at least ``min_seed_area`` pixels.

    Unset pixels whose four direct neighbours all belong to kept components
    are then filled. ``None`` uses :func:`default_min_seed_area`.
    """
    m = check_mask(mask)
    if min_seed_area is None:
        min_seed_area = default_min_seed_area(m.shape)
    runs = label_runs(m)
    keep = runs.area >= int(min_seed_area)
    out = runs.paint(keep)
    if runs.row.shape[0] > 1:
        _fill_single_holes(out, runs.row, runs.x0, runs.x1, runs.label, keep)
    return out


@dataclass(frozen=True)
class HsvRange:
    h_min: int = 0
    h_max: int = 255
    s_min: int = 0
    s_max: int = 255
    v_min: int = 0
    v_max: int = 255

    def __post_init__(self):
        for name in ("h_min", "h_max", "s_min", "s_max", "v_min", "v_max"):
            v = getattr(self, name)
            if not 0 <= int(v) <= 255:
                raise InvalidInputError(f"{name}={v} outside [0, 255]")
        if self.s_min > self.s_max:
            raise InvalidInputError("s_min > s_max (saturation does not wrap)")
        if self.v_min > self.v_max:
            raise InvalidInputError("v_min > v_max (value does not wrap)")

    @property
    def wraps(self):
        return self.h_min > self.h_max


def hsv_range_threshold(img_hsv, hsv_range):
    """Bit set iff the pixel lies in all three intervals; ``h_min > h_max`` wraps hue."""
    hsv = check_raster(img_hsv, channels=3, name="img_hsv")
    r = hsv_range
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    if r.wraps:
        in_h = (h >= r.h_min) | (h <= r.h_max)
    else:
        in_h = (h >= r.h_min) & (h <= r.h_max)
    return in_h & (s >= r.s_min) & (s <= r.s_max) & (v >= r.v_min) & (v <= r.v_max)


def read_samples_jsonl(path):
    """Load ``{"hsv": [h, s, v], "label": 1|-1}`` records into (X, y)."""
    X, y = [], []
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            label = int(rec["label"])
            if label not in (1, -1):
                raise InvalidInputError(f"line {n}: label must be 1 or -1, got {label}")
            X.append(rec["hsv"])
            y.append(label)
    return np.asarray(X, dtype=np.float64).reshape(-1, 3), np.asarray(y, dtype=np.int64)


def write_samples_jsonl(path, X, y):
    with open(path, "w") as fh:
        for hsv, label in zip(np.asarray(X).reshape(-1, 3), y):
            fh.write(json.dumps({"hsv": [int(v) for v in hsv], "label": int(label)}) + "\n")


class PixelClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`train_pixel_classifier`.

    ``X`` is an ``(n, 3)`` array of HSV triples and ``y`` holds labels in
    ``{-1, 1}`` (``{0, 1}`` is accepted and mapped).
    """

    def __init__(self, epochs=20, reg=1e-3, random_state=0):
        self.epochs = epochs
        self.reg = reg
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
        y = np.asarray(y).reshape(-1)
        if len(X) != len(y):
            raise InvalidInputError("X and y lengths differ")
        pos = y > 0
        self.model_ = train_pixel_classifier(X[pos], X[~pos], self.epochs, self.reg, self.random_state)
        self.classes_ = np.array([-1, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision(X)

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, 1, -1)


class LineSegmenter(TransformerMixin, BaseEstimator):
    """Image -> line mask: classify (or HSV-box) then region-grow.

    Parameters
    ----------
    model : ClassifierModel or None
        Pre-trained weights. Ignored when ``fit`` is called.
    hsv_range : HsvRange or None
        Fallback box used when no classifier is available.
    min_seed_area : int or None
        Region-growing threshold; ``None`` scales 64 px from 1920x1080.
    color : {"rgb", "hsv"}
        Colour space of the images passed to :meth:`transform`.
    """

    def __init__(self, model=None, hsv_range=None, min_seed_area=None, color="rgb",
                 epochs=20, reg=1e-3, random_state=0):
        self.model = model
        self.hsv_range = hsv_range
        self.min_seed_area = min_seed_area
        self.color = color
        self.epochs = epochs
        self.reg = reg
        self.random_state = random_state

    def fit(self, X, y=None):
        if y is None:
            raise InvalidInputError("LineSegmenter.fit needs HSV samples X and labels y")
        clf = PixelClassifier(self.epochs, self.reg, self.random_state).fit(X, y)
        self.model_ = clf.model_
        return self

    def _active_model(self):
        return getattr(self, "model_", None) or self.model

    def raw_mask(self, img):
        hsv = rgb_to_hsv(img) if self.color == "rgb" else check_raster(img, channels=3)
        model = self._active_model()
        if model is not None:
            return classify_pixels(hsv, model)
        if self.hsv_range is None:
            raise InvalidInputError("LineSegmenter needs a classifier model or an hsv_range")
        return hsv_range_threshold(hsv, self.hsv_range)

    def transform(self, img):
        return region_grow(self.raw_mask(img), self.min_seed_area)
