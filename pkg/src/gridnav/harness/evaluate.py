"""Detection accuracy against ground truth and pipeline throughput."""

import math
import statistics
import time
from dataclasses import asdict, dataclass, field

from .._validation import InvalidInputError
from ..detectors import METHODS, make_detector
from ..lines import wrap_angle
from .dataset import load_dataset

__all__ = ["MetricReport", "BenchReport", "match_lines", "evaluate", "evaluate_frames",
           "benchmark_fps", "RHO_GATE", "THETA_GATE"]

RHO_GATE = 100.0
THETA_GATE = 20.0


def _residuals(truth, det):
    rho_d, theta_d = det.aligned(truth.theta_deg)
    return abs(rho_d - truth.rho), abs(wrap_angle(theta_d - truth.theta_deg))


def match_lines(truth, detections, rho_gate=RHO_GATE, theta_gate=THETA_GATE):
    """Greedy one-to-one matching inside the gates.

    Returns ``(pairs, misses, false_positives)`` where ``pairs`` holds
    ``(truth index, detection index, |drho|, |dalpha|)``. Candidate pairs
    are taken in increasing ``|drho|/rho_gate + |dalpha|/theta_gate``.
    """
    cand = []
    for i, t in enumerate(truth):
        for j, d in enumerate(detections):
            dr, da = _residuals(t, d)
            if dr <= rho_gate and da <= theta_gate:
                cand.append((dr / rho_gate + da / theta_gate, i, j, dr, da))
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, i, j, dr, da in cand:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        pairs.append((i, j, dr, da))
    return pairs, len(truth) - len(pairs), len(detections) - len(pairs)


@dataclass
class MethodMetrics:
    mean_dr: float
    mean_da: float
    matched: int
    misses: int
    false_positives: int
    detections: int


@dataclass
class MetricReport:
    methods: dict
    records: list = field(default_factory=list)

    def recompute(self, method):
        """Means rebuilt from the per-image records (consistency check)."""
        drs = [p[2] for r in self.records if r["method"] == method for p in r["pairs"]]
        das = [p[3] for r in self.records if r["method"] == method for p in r["pairs"]]
        return (sum(drs) / len(drs) if drs else math.nan,
                sum(das) / len(das) if das else math.nan)

    def to_dict(self):
        return {"methods": {m: asdict(v) for m, v in self.methods.items()},
                "records": self.records}


def evaluate_frames(frames, methods=METHODS, detectors=None):
    """Score each method on ``(name, image, truth_lines)`` triples."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    detectors = detectors or {m: make_detector(m) for m in methods}
    records = []
    for name, img, truth in frames:
        for m in methods:
            det = detectors[m].predict(img)
            pairs, miss, fp = match_lines(truth, det)
            records.append({"image": name, "method": m, "pairs": pairs, "misses": miss,
                            "false_positives": fp, "detections": len(det)})
    report = MetricReport({}, records)
    for m in methods:
        rs = [r for r in records if r["method"] == m]
        dr, da = report.recompute(m)
        report.methods[m] = MethodMetrics(
            dr, da, sum(len(r["pairs"]) for r in rs), sum(r["misses"] for r in rs),
            sum(r["false_positives"] for r in rs), sum(r["detections"] for r in rs))
    return report


def evaluate(dataset_dir, methods=METHODS):
    """:func:`evaluate_frames` over a dataset written by ``gen_dataset``."""
    frames = ((f.name, f.image, f.lines) for f in load_dataset(dataset_dir))
    return evaluate_frames(list(frames), methods)


@dataclass
class BenchReport:
    method: str
    fps: float
    width: int
    height: int
    warmup: int
    reps: int
    stages: dict


def benchmark_fps(images, method, warmup=2, reps=5):
    """Median frames per second of threshold + line detection, single-threaded.

    ``images`` are in-memory rasters (no file I/O is timed). Each repetition
    runs the whole list; the per-stage split (``segment``/``lines``) is the
    median over repetitions too.
    """
    if reps < 3:
        raise InvalidInputError("reps must be >= 3")
    images = list(images)
    if not images:
        raise InvalidInputError("no images to benchmark")
    det = make_detector(method)
    for i in range(warmup):
        det.predict(images[i % len(images)])
    seg_t, line_t = [], []
    for _ in range(reps):
        s = l = 0.0
        for img in images:
            t0 = time.perf_counter()
            mask = det.segment(img)
            t1 = time.perf_counter()
            det.predict_mask(mask)
            t2 = time.perf_counter()
            s += t1 - t0
            l += t2 - t1
        seg_t.append(s / len(images))
        line_t.append(l / len(images))
    per = [a + b for a, b in zip(seg_t, line_t)]
    h, w = images[0].shape[:2]
    return BenchReport(method, 1.0 / statistics.median(per), w, h, warmup, reps,
                       {"segment_ms": 1e3 * statistics.median(seg_t),
                        "lines_ms": 1e3 * statistics.median(line_t)})
