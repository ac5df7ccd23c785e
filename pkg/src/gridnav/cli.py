"""Command-line entry point: ``gridnav <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 mission failed.
"""

import argparse
import json
import logging
import sys

from ._validation import InvalidInputError
from .detectors import METHODS, make_detector
from .lines import lines_to_jsonl
from .raster import read_pnm
from .threshold import ClassifierModel, LineSegmenter, read_samples_jsonl

log = logging.getLogger("gridnav")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_MISSION_FAILED = 3


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _segmenter(model_path):
    if not model_path:
        return None
    with open(model_path) as fh:
        return LineSegmenter(model=ClassifierModel.from_json(fh.read()))


def cmd_gen_dataset(args):
    from .harness.dataset import PerturbRanges, gen_dataset
    from .sim.world import WorldSpec
    spec = WorldSpec.from_dict(_load_json(args.world)) if args.world else None
    ranges = PerturbRanges.none() if args.clean else PerturbRanges.from_dict(_load_json(args.ranges))
    manifest = gen_dataset(args.out, args.n, spec, ranges, args.seed, args.width, args.height)
    print(json.dumps({"out": args.out, "n_images": manifest["n_images"], "seed": args.seed}))
    return EXIT_OK


def cmd_detect(args):
    img = read_pnm(args.image)
    det = make_detector(args.method, _segmenter(args.model))
    sys.stdout.write(lines_to_jsonl(det.predict(img), args.method))
    return EXIT_OK


def cmd_evaluate(args):
    from .harness.evaluate import evaluate
    report = evaluate(args.dataset, args.methods)
    out = {m: vars(v) for m, v in report.methods.items()}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_bench(args):
    from .harness.dataset import load_dataset
    from .harness.evaluate import benchmark_fps
    images = [f.image for f in load_dataset(args.dataset)]
    for m in args.methods:
        rep = benchmark_fps(images, m, args.warmup, args.reps)
        print(json.dumps(vars(rep)))
    return EXIT_OK


def cmd_sim_run(args):
    from .harness.missions import run_mission_cli
    code, summary = run_mission_cli(_load_json(args.world), _load_json(args.mission),
                                    _load_json(args.pipeline), args.seed, args.out,
                                    args.render_frames)
    print(json.dumps({k: summary[k] for k in ("status", "cause", "visited", "frames", "digest")}))
    return code


def cmd_train_threshold(args):
    X, y = read_samples_jsonl(args.samples)
    seg = LineSegmenter(epochs=args.epochs, random_state=args.seed).fit(X, y)
    with open(args.out, "w") as fh:
        fh.write(seg.model_.to_json())
    print(json.dumps({"out": args.out, "samples": int(len(y))}))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gridnav", description="Grid line navigation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="render annotated synthetic frames")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--world", help="world spec JSON")
    g.add_argument("--ranges", help="perturbation ranges JSON")
    g.add_argument("--clean", action="store_true", help="no perturbation or tilt")
    g.add_argument("--width", type=int, default=1920)
    g.add_argument("--height", type=int, default=1080)
    g.set_defaults(func=cmd_gen_dataset)

    d = sub.add_parser("detect", help="detect lines in one PPM image, JSON lines to stdout")
    d.add_argument("image")
    d.add_argument("--method", choices=METHODS, default="combined")
    d.add_argument("--model", help="classifier JSON from train-threshold")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="score methods against dataset ground truth")
    e.add_argument("dataset")
    e.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    e.add_argument("--out", help="write the full report (with per-image records)")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="frames per second of the detection pipeline")
    b.add_argument("dataset")
    b.add_argument("--methods", nargs="+", choices=METHODS, default=["skeleton", "centroid"])
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sim-run", help="fly a mission in the simulator")
    s.add_argument("--world", help="world spec JSON")
    s.add_argument("--mission", help="mission JSON")
    s.add_argument("--pipeline", help="pipeline config JSON")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--render-frames", action="store_true")
    s.set_defaults(func=cmd_sim_run)

    t = sub.add_parser("train-threshold", help="train the pixel classifier on HSV samples")
    t.add_argument("samples", help='JSONL lines {"hsv": [h, s, v], "label": 1|-1}')
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train_threshold)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidInputError, OSError, json.JSONDecodeError, TypeError, KeyError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
