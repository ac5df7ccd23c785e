import json
import os

import numpy as np
import pytest

from gridnav._validation import InvalidInputError
from gridnav.cli import main
from gridnav.harness.dataset import (InvalidDatasetError, PerturbRanges, gen_dataset,
                                     load_dataset)
from gridnav.harness.evaluate import benchmark_fps, evaluate, evaluate_frames, match_lines
from gridnav.harness.missions import check_mission, mission_plan_from_dict, suite_scenario
from gridnav.lines import HessianLine
from gridnav.sim.camera import CameraIntrinsics, Pose, image_line
from gridnav.sim.world import WorldSpec, generate_world


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    gen_dataset(str(d), 4, rng_seed=7, width=480, height=270)
    return str(d)


class TestDataset:
    def test_deterministic(self, tmp_path, dataset):
        gen_dataset(str(tmp_path), 4, rng_seed=7, width=480, height=270)
        for name in sorted(os.listdir(dataset)):
            with open(os.path.join(dataset, name), "rb") as a, \
                    open(os.path.join(tmp_path, name), "rb") as b:
                assert a.read() == b.read(), name

    def test_clean_truth_is_exact_projection(self, tmp_path):
        spec = WorldSpec.from_fov(2.0, 90.0, shelf_rows=2, nodes_per_row=4)
        gen_dataset(str(tmp_path), 1, spec, PerturbRanges.none(), 3, 480, 270)
        (frame,) = list(load_dataset(str(tmp_path)))
        p = frame.truth["pose"]
        pose = Pose(p["x"], p["y"], p["altitude_h"], p["roll"], p["pitch"], p["yaw"])
        intr = CameraIntrinsics.from_fov(90.0, 480, 270)
        world = generate_world(spec, 0)
        expected = [image_line(s.world_line, pose, intr) for s in world.segments]
        assert frame.lines
        for line in frame.lines:
            best = min(abs(line.rho - e.rho) + abs(line.theta_deg - e.theta_deg)
                       for e in expected)
            assert best < 1e-9
        assert frame.image.shape == (270, 480, 3)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(InvalidDatasetError):
            list(load_dataset(str(tmp_path)))

    def test_missing_truth(self, tmp_path):
        gen_dataset(str(tmp_path), 1, rng_seed=1, width=160, height=90)
        os.remove(tmp_path / "frame_0000.json")
        with pytest.raises(InvalidDatasetError):
            list(load_dataset(str(tmp_path)))

    def test_n_positive(self, tmp_path):
        with pytest.raises(InvalidInputError):
            gen_dataset(str(tmp_path), 0)


class TestMatching:
    def test_greedy_one_to_one(self):
        truth = [HessianLine(100, 0), HessianLine(300, 90)]
        det = [HessianLine(104, 1), HessianLine(101, 0), HessianLine(900, 45)]
        pairs, miss, fp = match_lines(truth, det)
        assert [(i, j) for i, j, _, _ in pairs] == [(0, 1)]
        assert miss == 1 and fp == 2

    def test_wrapped_angles(self):
        pairs, _, _ = match_lines([HessianLine(100, 1)], [HessianLine(-102, 179)])
        assert pairs[0][2] == pytest.approx(2) and pairs[0][3] == pytest.approx(2)

    def test_gates(self):
        assert match_lines([HessianLine(0, 0)], [HessianLine(101, 0)])[0] == []
        assert match_lines([HessianLine(0, 0)], [HessianLine(0, 21)])[0] == []


class TestEvaluate:
    def test_report_consistent(self, dataset):
        rep = evaluate(dataset, ["centroid", "skeleton"])
        for m in ("centroid", "skeleton"):
            dr, da = rep.recompute(m)
            assert rep.methods[m].mean_dr == pytest.approx(dr, abs=1e-9)
            assert rep.methods[m].mean_da == pytest.approx(da, abs=1e-9)
        json.dumps(rep.to_dict())

    def test_method_order_irrelevant(self, dataset):
        a = evaluate(dataset, ["centroid", "skeleton"]).methods
        b = evaluate(dataset, ["skeleton", "centroid"]).methods
        assert a == b

    def test_unknown_method(self):
        with pytest.raises(InvalidInputError):
            evaluate_frames([], ["magic"])


class TestBench:
    def test_reps_minimum(self):
        with pytest.raises(InvalidInputError):
            benchmark_fps([np.zeros((10, 10, 3), np.uint8)], "centroid", reps=2)

    def test_report(self, dataset):
        imgs = [f.image for f in load_dataset(dataset)]
        r = benchmark_fps(imgs, "skeleton", warmup=1, reps=3)
        assert r.fps > 0 and (r.width, r.height) == (480, 270)
        assert set(r.stages) == {"segment_ms", "lines_ms"}


class TestMissions:
    def test_scenario_deterministic(self):
        assert suite_scenario(3)[0] == suite_scenario(3)[0]
        spec, cfg, dwell = suite_scenario(3)
        assert 1 <= spec.shelf_rows <= 2 and 3 <= spec.nodes_per_row <= 6
        assert (cfg.width, cfg.height, dwell) == (320, 180, 1.0)

    def test_plan_rows(self):
        w = generate_world(WorldSpec.from_fov(2.0, 90.0, shelf_rows=2, nodes_per_row=3))
        assert mission_plan_from_dict(w, {"rows": [1], "dwell_s": 0.5}).targets == (5, 4, 3)

    def test_check_flags_wrong_order(self):
        class T:
            summary = {"status": "ok", "cause": "", "l_as_node": 1,
                       "visits": [{"feature": "node", "feature_id": 1},
                                  {"feature": "corner", "feature_id": 0}]}
        from gridnav.strategy import MissionPlan
        ok, why = check_mission(MissionPlan((0, 1)), T)
        assert not ok and len(why) == 2


class TestCli:
    def test_detect(self, dataset, capsys):
        assert main(["detect", os.path.join(dataset, "frame_0000.ppm"), "--method",
                     "skeleton"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out and all(json.loads(l)["method"] == "skeleton" for l in out)

    def test_errors(self, tmp_path, capsys):
        assert main(["detect", str(tmp_path / "nope.ppm")]) == 2
        assert main(["no-such-command"]) == 2
        assert main(["evaluate", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_evaluate_writes_report(self, dataset, tmp_path):
        out = tmp_path / "rep.json"
        assert main(["evaluate", dataset, "--methods", "centroid", "--out", str(out)]) == 0
        assert "centroid" in json.loads(out.read_text())["methods"]

    def test_bad_world(self, tmp_path):
        world = tmp_path / "w.json"
        world.write_text(json.dumps({"d_x": 3.0, "d_y": 2.0, "sigma": 90.0}))
        assert main(["sim-run", "--world", str(world), "--out", str(tmp_path / "o")]) == 2

    @pytest.mark.slow
    def test_sim_run_ok_and_deterministic(self, tmp_path):
        world = tmp_path / "w.json"
        world.write_text(json.dumps({"d_y": 2.0, "sigma": 90.0, "nodes_per_row": 3}))
        mission = tmp_path / "m.json"
        mission.write_text(json.dumps({"dwell_s": 1.0}))
        pipe = tmp_path / "p.json"
        pipe.write_text(json.dumps({"width": 320, "height": 180}))
        digests = []
        for run in ("a", "b"):
            code = main(["sim-run", "--world", str(world), "--mission", str(mission),
                         "--pipeline", str(pipe), "--seed", "2", "--out", str(tmp_path / run)])
            assert code == 0
            digests.append(json.loads((tmp_path / run / "summary.json").read_text())["digest"])
        assert digests[0] == digests[1]
        assert (tmp_path / "a" / "trace.jsonl").read_bytes() == \
            (tmp_path / "b" / "trace.jsonl").read_bytes()
