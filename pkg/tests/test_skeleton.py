import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from gridnav._validation import InvalidInputError
from gridnav.lines import HessianLine, LineClass, classify_line
from gridnav.skeleton import (HoughParams, cluster_lines, default_peak_threshold,
                              hough_accumulator, hough_lines, zhang_suen_thin)

from conftest import line_mask

EIGHT = np.ones((3, 3), int)


def zs_reference(mask):
    """Straightforward Zhang-Suen from the published neighbour rules."""
    img = np.pad(mask.astype(np.uint8), 1)
    h, w = img.shape
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            kill = []
            for y in range(1, h - 1):
                for x in range(1, w - 1):
                    if not img[y, x]:
                        continue
                    p2, p3, p4 = img[y - 1, x], img[y - 1, x + 1], img[y, x + 1]
                    p5, p6, p7 = img[y + 1, x + 1], img[y + 1, x], img[y + 1, x - 1]
                    p8, p9 = img[y, x - 1], img[y - 1, x - 1]
                    nb = [p2, p3, p4, p5, p6, p7, p8, p9]
                    b = sum(nb)
                    a = sum(1 for i in range(8) if nb[i] == 0 and nb[(i + 1) % 8] == 1)
                    if not (2 <= b <= 6 and a == 1):
                        continue
                    if step == 0 and p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0:
                        kill.append((y, x))
                    if step == 1 and p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0:
                        kill.append((y, x))
            for y, x in kill:
                img[y, x] = 0
            changed = changed or bool(kill)
    return img[1:-1, 1:-1].astype(bool)


@st.composite
def hole_free_masks(draw, max_side=28):
    """Unions of random rectangles and thick strokes with their holes filled."""
    h = draw(st.integers(8, max_side))
    w = draw(st.integers(8, max_side))
    m = np.zeros((h, w), bool)
    for _ in range(draw(st.integers(1, 4))):
        y0, x0 = draw(st.integers(0, h - 2)), draw(st.integers(0, w - 2))
        y1, x1 = draw(st.integers(y0 + 1, h)), draw(st.integers(x0 + 1, w))
        m[y0:y1, x0:x1] = True
    if draw(st.booleans()):
        rho = draw(st.floats(0, max(h, w)))
        theta = draw(st.floats(0, 179))
        m |= line_mask((h, w), rho, theta, draw(st.floats(0.6, 3.0)))
    return ndimage.binary_fill_holes(m)


def n_components(m):
    return ndimage.label(m, structure=EIGHT)[1]


class TestThinning:
    def test_thin_diagonal_unchanged(self):
        m = np.eye(30, dtype=bool)
        assert np.array_equal(zhang_suen_thin(m), m)

    def test_five_px_bar_centreline(self):
        m = np.zeros((30, 100), bool)
        m[10:15, :] = True
        out = zhang_suen_thin(m)
        assert out[:, 3:97].sum() == 94 and out[12, 3:97].all()
        assert np.array_equal(out, zs_reference(m))

    def test_three_px_bar(self):
        m = np.zeros((20, 60), bool)
        m[8:11, 5:55] = True
        out = zhang_suen_thin(m)
        assert out[9, 7:53].all() and out[:, 7:53].sum() == 46

    def test_empty(self):
        assert not zhang_suen_thin(np.zeros((9, 9), bool)).any()

    @given(hole_free_masks())
    def test_matches_reference(self, m):
        got, ref = zhang_suen_thin(m), zs_reference(m)
        assert not (ref & ~got).any()
        extra = got & ~ref
        if n_components(ref) == n_components(m):
            assert not extra.any()
        else:
            # one isolated pixel for every component the plain rule erases
            assert extra.sum() == n_components(m) - n_components(ref)
            nb = ndimage.convolve(got.astype(int), EIGHT, mode="constant") - got
            assert (nb[extra] == 0).all()

    def test_two_by_two_block_survives(self):
        m = np.zeros((6, 6), bool)
        m[2:4, 2:4] = True
        assert not zs_reference(m).any()
        out = zhang_suen_thin(m)
        assert out.sum() == 1 and out[2, 2]

    @given(hole_free_masks())
    def test_properties(self, m):
        t = zhang_suen_thin(m)
        assert not (t & ~m).any()
        assert np.array_equal(zhang_suen_thin(t), t)
        assert n_components(t) == n_components(m)


class TestHough:
    def test_vertical(self):
        m = np.zeros((200, 200), bool)
        m[:, 100] = True
        top = hough_lines(m)[0]
        rho, theta = top.aligned(0.0)
        assert abs(rho - 100) <= 1 and abs(theta) <= 1

    def test_horizontal(self):
        m = np.zeros((200, 200), bool)
        m[50, :] = True
        rho, theta = hough_lines(m)[0].aligned(90.0)
        assert abs(rho - 50) <= 1 and abs(theta - 90) <= 1

    def test_diagonal_against_fine_oracle(self):
        m = np.eye(200, dtype=bool)
        rho, theta = hough_lines(m)[0].aligned(135.0)
        assert abs(rho) <= 1 and abs(theta - 135) <= 1
        acc, rhos, thetas = hough_accumulator(m, 0.5, 1.0)
        j, k = np.unravel_index(np.argmax(acc), acc.shape)
        assert abs(rhos[j]) <= 1 and abs(thetas[k] - 135) <= 0.5

    def test_accumulator_brute_force(self, rng):
        m = rng.random((15, 17)) < 0.1
        acc, rhos, thetas = hough_accumulator(m, 5.0, 2.0)
        ref = np.zeros_like(acc)
        for y, x in zip(*np.nonzero(m)):
            for k, t in enumerate(thetas):
                r = x * math.cos(math.radians(t)) + y * math.sin(math.radians(t))
                ref[int(np.argmin(np.abs(rhos - r))), k] += 1
        # ties at exact half cells may round either way; totals must agree
        assert acc.sum() == ref.sum() and np.abs(acc - ref).sum() <= 0.02 * ref.sum()

    @given(st.floats(20, 180), st.floats(0, 179.5))
    def test_recovery(self, rho, theta):
        m = line_mask((200, 220), rho, theta)
        if m.sum() < 50:
            return
        lines = hough_lines(m, HoughParams(peak_threshold=20))
        assert lines
        r, t = lines[0].aligned(theta)
        assert abs(r - rho) <= 1 and abs(t - theta) <= 1

    def test_rotation_consistent(self):
        m = line_mask((160, 160), 70, 30)
        a = hough_lines(m)[0]
        rot = np.rot90(m, k=-1)  # clockwise: (x, y) -> (H - 1 - y, x)
        b = hough_lines(rot)[0]
        # rotated line: theta + 90, rho + (H - 1) cos(theta + 90)
        t = a.theta_deg + 90.0
        expect = HessianLine(a.rho + 159 * math.cos(math.radians(t)), t)
        r, th = b.aligned(expect.theta_deg)
        assert abs(r - expect.rho) <= 1 and abs(th - expect.theta_deg) <= 1

    def test_params_validated(self):
        with pytest.raises(InvalidInputError):
            HoughParams(theta_step=0)
        with pytest.raises(InvalidInputError):
            HoughParams(peak_threshold=1)
        with pytest.raises(InvalidInputError):
            HoughParams(theta_step=7)

    def test_threshold_scales_with_diagonal(self):
        assert default_peak_threshold((1080, 1920)) == pytest.approx(30)
        assert default_peak_threshold((540, 960)) == pytest.approx(15)

    def test_sorted_by_votes(self):
        m = np.zeros((200, 200), bool)
        m[:, 40] = True
        m[100, 60:160] = True
        lines = hough_lines(m)
        assert [l.votes for l in lines] == sorted((l.votes for l in lines), reverse=True)
        assert len(lines) == 2


class TestCluster:
    def test_merge_pair(self):
        out = cluster_lines([HessianLine(100, 0), HessianLine(101, 2)])
        assert len(out) == 1
        assert out[0].rho == pytest.approx(100.5, abs=1e-6)
        assert out[0].theta_deg == pytest.approx(1.0, abs=1e-6)

    def test_distinct(self):
        lines = [HessianLine(100, 0), HessianLine(50, 90)]
        out = cluster_lines(lines)
        assert sorted((l.rho, l.theta_deg) for l in out) == [(50, 90), (100, 0)]

    def test_empty(self):
        assert cluster_lines([]) == []

    def test_wraps_across_zero(self):
        out = cluster_lines([HessianLine(100, 179), HessianLine(-100, 1.0)])
        assert len(out) == 1
        r, t = out[0].aligned(0.0)
        assert r == pytest.approx(-100, abs=1e-6) or r == pytest.approx(100, abs=1e-6)
        assert abs(t) <= 1e-6

    def test_parallel_lines_kept_apart(self):
        assert len(cluster_lines([HessianLine(100, 0), HessianLine(125, 0)])) == 2

    @given(st.lists(st.tuples(st.floats(-300, 300), st.floats(0, 179.9)), max_size=12))
    def test_never_grows(self, raw):
        lines = [HessianLine(r, t) for r, t in raw]
        assert len(cluster_lines(lines)) <= len(lines)


class TestClassify:
    @pytest.mark.parametrize("theta,cls", [
        (10, LineClass.VERTICAL), (90, LineClass.HORIZONTAL), (160, LineClass.VERTICAL),
        (0, LineClass.VERTICAL), (30, LineClass.HORIZONTAL), (150, LineClass.HORIZONTAL),
        (150.001, LineClass.VERTICAL), (29.999, LineClass.VERTICAL)])
    def test_ranges(self, theta, cls):
        assert classify_line(HessianLine(10, theta)) is cls

    @given(st.floats(0, 179.999))
    def test_partition(self, theta):
        c = classify_line(HessianLine(0, theta))
        in_v = theta < 30 or theta > 150
        assert (c is LineClass.VERTICAL) == in_v
