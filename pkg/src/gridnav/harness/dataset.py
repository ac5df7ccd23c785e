"""Synthetic detection datasets: PPM frames, JSON ground truth, a manifest."""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .._validation import InvalidInputError
from ..lines import HessianLine
from ..raster import read_pnm, write_pnm
from ..sim.camera import CameraIntrinsics, PerturbConfig, Pose, render_camera
from ..sim.world import WorldSpec, generate_world

__all__ = ["PerturbRanges", "InvalidDatasetError", "gen_dataset", "load_dataset",
           "DatasetFrame", "sample_pose", "default_dataset_world"]

MANIFEST = "manifest.json"


class InvalidDatasetError(InvalidInputError):
    """A dataset directory is missing files or ground truth."""


@dataclass(frozen=True)
class PerturbRanges:
    """Uniform ranges each frame's perturbation is drawn from."""

    blur_sigma: tuple = (0.0, 1.5)
    brightness_gain: tuple = (0.75, 1.25)
    noise_sigma: tuple = (0.0, 4.0)
    speck_fraction: tuple = (0.0, 0.0005)
    occlusions: tuple = (0, 1)
    max_tilt: float = 10.0
    altitude: tuple = (1.6, 2.4)

    @classmethod
    def none(cls):
        return cls((0.0, 0.0), (1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (0, 0), 0.0, (2.0, 2.0))

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in (d or {}).items()})

    def draw(self, rng):
        return PerturbConfig(
            blur_sigma=float(rng.uniform(*self.blur_sigma)),
            brightness_gain=float(rng.uniform(*self.brightness_gain)),
            noise_sigma=float(rng.uniform(*self.noise_sigma)),
            speck_fraction=float(rng.uniform(*self.speck_fraction)),
            occlusions=int(rng.integers(self.occlusions[0], self.occlusions[1] + 1)),
        )


def default_dataset_world():
    return WorldSpec.from_fov(2.0, 90.0, shelf_rows=2, nodes_per_row=4)


def sample_pose(world, rng, ranges):
    """A pose over the painted grid: near a row line or a connector, any of
    the four grid headings plus up to 15 degrees of yaw jitter."""
    seg = world.segments[int(rng.integers(len(world.segments)))]
    (x0, y0), (x1, y1) = seg.p0, seg.p1
    t = rng.uniform(0.0, 1.0)
    x = x0 + t * (x1 - x0) + rng.uniform(-0.4, 0.4)
    y = y0 + t * (y1 - y0) + rng.uniform(-0.4, 0.4)
    yaw = 90.0 * int(rng.integers(4)) + rng.uniform(-15.0, 15.0)
    tilt = ranges.max_tilt
    roll, pitch = rng.uniform(-tilt, tilt), rng.uniform(-tilt, tilt)
    h = rng.uniform(*ranges.altitude)
    return Pose(float(x), float(y), float(h), float(roll), float(pitch), float(yaw))


def gen_dataset(out_dir, n_images, world_spec=None, ranges=None, rng_seed=0, width=1920,
                height=1080, world_seed=0):
    """Render ``n_images`` annotated frames into ``out_dir``; returns the manifest dict.

    Each frame ``frame_XXXX.ppm`` has a sidecar ``frame_XXXX.json`` with the
    pose, intrinsics, exact image-space ground-truth lines and nodes, and
    the perturbation applied.
    """
    if int(n_images) < 1:
        raise InvalidInputError("n_images must be >= 1")
    spec = world_spec or default_dataset_world()
    ranges = ranges or PerturbRanges()
    world = generate_world(spec, world_seed)
    intr = CameraIntrinsics.from_fov(spec.sigma, width, height)
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(int(rng_seed))
    files = []
    for i in range(int(n_images)):
        pose = sample_pose(world, rng, ranges)
        pc = ranges.draw(rng)
        frame_seed = int(rng.integers(0, 2**31))
        gt = render_camera(world, pose, intr, pc, frame_seed)
        stem = f"frame_{i:04d}"
        write_pnm(os.path.join(out_dir, stem + ".ppm"), gt.rendered)
        side = gt.sidecar()
        side["perturb"] = asdict(pc)
        side["frame_seed"] = frame_seed
        with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
            json.dump(side, fh, sort_keys=True, indent=1)
        files.append({"image": stem + ".ppm", "truth": stem + ".json"})
    manifest = {
        "seed": int(rng_seed),
        "world_seed": int(world_seed),
        "n_images": int(n_images),
        "width": int(width),
        "height": int(height),
        "world": spec.to_dict(),
        "ranges": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(ranges).items()},
        "files": files,
    }
    with open(os.path.join(out_dir, MANIFEST), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


@dataclass
class DatasetFrame:
    name: str
    image: np.ndarray
    lines: list
    truth: dict


def load_dataset(path):
    """Yield :class:`DatasetFrame` for every manifest entry under ``path``."""
    mpath = os.path.join(path, MANIFEST)
    if not os.path.isfile(mpath):
        raise InvalidDatasetError(f"no {MANIFEST} in {path}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    for entry in manifest.get("files", []):
        tpath = os.path.join(path, entry.get("truth", ""))
        if not entry.get("truth") or not os.path.isfile(tpath):
            raise InvalidDatasetError(f"missing ground truth for {entry.get('image')}")
        with open(tpath) as fh:
            truth = json.load(fh)
        if "lines" not in truth:
            raise InvalidDatasetError(f"{tpath} has no 'lines'")
        lines = [HessianLine(l["rho"], l["theta_deg"]) for l in truth["lines"]]
        img = read_pnm(os.path.join(path, entry["image"]))
        yield DatasetFrame(entry["image"], img, lines, truth)

