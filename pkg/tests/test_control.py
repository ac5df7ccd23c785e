import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridnav._validation import InvalidInputError
from gridnav.control import (ControlCommand, Controller, ControllerConfig, ErrorVector,
                             LostLineError, PidGains, PidState, clip_command, compute_errors,
                             control_log_csv, correct_offset, pid_step)
from gridnav.lines import HessianLine

finite = st.floats(-1e6, 1e6)


class TestErrors:
    def test_centred_vertical(self):
        e = compute_errors([HessianLine(960, 0)], [], (1920, 1080))
        assert e.dx == 0 and e.dy == 0

    def test_horizontal_reference_is_ninety(self):
        e = compute_errors([], [HessianLine(540, 90)], (1920, 1080))
        assert e.dy == 0 and e.dtheta == 0

    def test_offset(self):
        assert compute_errors([HessianLine(860, 0)], [], (1920, 1080)).dx == 100

    def test_no_lines(self):
        with pytest.raises(LostLineError):
            compute_errors([], [], (1920, 1080))

    def test_vertical_angle_near_wrap(self):
        e = compute_errors([HessianLine(-960, 178)], [], (1920, 1080))
        assert e.dx == pytest.approx(0) and e.dtheta == pytest.approx(2)

    def test_goal_and_bias(self):
        v, h1, h2 = HessianLine(960, 0), HessianLine(500, 90), HessianLine(300, 90)
        assert compute_errors([v], [h1, h2], (1920, 1080), goal=h2).dy == 240
        assert compute_errors([v], [h1], (1920, 1080), forward_bias=162).dy == 162


class TestCorrectOffset:
    def test_zero_tilt(self):
        assert correct_offset(321.5, 0.0, scale_k=700) == 321.5

    def test_formula(self):
        assert correct_offset(1000, 5.0, scale_k=700) == pytest.approx(938.758, abs=1e-3)

    def test_odd(self):
        a = correct_offset(1000, 5.0, scale_k=700) - 1000
        b = correct_offset(1000, -5.0, scale_k=700) - 1000
        assert a + b == pytest.approx(0, abs=1e-12)

    @given(st.floats(-2000, 2000), st.floats(-44, 44), st.floats(1, 3000))
    def test_anti_symmetric(self, rho, tilt, k):
        assert correct_offset(correct_offset(rho, tilt, scale_k=k), -tilt, scale_k=k) == \
            pytest.approx(rho, abs=1e-9)

    def test_metres_form(self):
        assert correct_offset(10.0, 45.0 - 1e-12, altitude_h=2.0) == pytest.approx(8.0)

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            correct_offset(1, 45.0, scale_k=1)
        with pytest.raises(InvalidInputError):
            correct_offset(1, 5.0)


class TestPid:
    def test_pure_p(self):
        assert pid_step(PidGains(2), PidState(), 3.0, 0.05)[0] == 6.0

    def test_zero(self):
        assert pid_step(PidGains(1, 1, 1), PidState(), 0.0, 0.05)[0] == 0.0

    def test_hand_recursion(self):
        # bound wide enough (2 * 1920 px / ki) that it never engages
        g, s = PidGains(1, 1, 0, i_max=3840.0), PidState()
        outs = []
        for e in (2.0, 2.0):
            o, s = pid_step(g, s, e, 1.0)
            outs.append(o)
        assert outs == [4.0, 6.0]

    def test_derivative_starts_at_zero(self):
        g = PidGains(0, 0, 1)
        o1, s = pid_step(g, PidState(), 5.0, 0.5)
        o2, _ = pid_step(g, s, 6.0, 0.5)
        assert o1 == 0.0 and o2 == 2.0

    def test_integral_clamped(self):
        g = PidGains(0, 0.01)
        s = PidState()
        for _ in range(1000):
            o, s = pid_step(g, s, 100.0, 1.0)
        assert s.integral == pytest.approx(10.0) and o == pytest.approx(0.1)

    def test_dt_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            pid_step(PidGains(1), PidState(), 1.0, 0.0)

    def test_gains_validated(self):
        with pytest.raises(InvalidInputError):
            PidGains(-1)
        with pytest.raises(InvalidInputError):
            PidGains(1, math.nan)

    @given(finite, finite, st.floats(0, 100))
    def test_linear_when_proportional(self, a, b, kp):
        g = PidGains(kp)
        s = PidState(integral=3.0, prev_error=1.0, initialized=True)
        lhs = pid_step(g, s, a + b, 0.05)[0]
        rhs = pid_step(g, s, a, 0.05)[0] + pid_step(g, s, b, 0.05)[0]
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


class TestClip:
    def test_examples(self):
        assert clip_command((0.5, -0.05, 0.0)) == ControlCommand(1.0, -0.5, 0.0)

    @given(st.floats(allow_nan=True, allow_infinity=True),
           st.floats(allow_nan=True, allow_infinity=True),
           st.floats(allow_nan=True, allow_infinity=True))
    def test_always_in_range(self, a, b, c):
        cmd = clip_command((a, b, c))
        for v in (cmd.roll_cmd, cmd.pitch_cmd, cmd.yaw_rate_cmd):
            assert -1.0 <= v <= 1.0 and math.isfinite(v)


class TestController:
    def test_signs(self):
        c = Controller(width=1920)
        cmd = c.step(ErrorVector(100.0, 50.0, 5.0), 0.05)
        # line left of centre -> roll left; goal ahead -> nose down; yaw follows dtheta
        assert cmd.roll_cmd < 0 and cmd.pitch_cmd < 0 and cmd.yaw_rate_cmd > 0

    def test_resolution_independent(self):
        a = Controller(width=1920).step(ErrorVector(40.0, 0.0, 0.0), 0.05)
        b = Controller(width=480).step(ErrorVector(10.0, 0.0, 0.0), 0.05)
        assert a.roll_cmd == pytest.approx(b.roll_cmd)

    def test_hold_resets(self):
        c = Controller()
        c.step(ErrorVector(100.0, 0.0, 0.0), 0.05)
        assert c.hold(0.25) == ControlCommand(0.0, 0.0, 0.0, 0.25)
        assert c.states["x"].integral == 0.0

    def test_config_round_trip(self):
        cfg = ControllerConfig.from_dict({"gains": {"x": {"kp": 0.002}}, "scale_k": 700})
        assert cfg.gains["x"].kp == 0.002 and cfg.scale_k == 700
        again = ControllerConfig.from_dict(cfg.to_dict())
        assert again.gains == cfg.gains

    def test_log_csv(self):
        text = control_log_csv([(0, ErrorVector(1.0, 2.0, 3.0), ControlCommand(0.1, 0.2, 0.3))])
        lines = text.splitlines()
        assert lines[0] == "step,dx,dy,dtheta,roll_cmd,pitch_cmd,yaw_rate_cmd"
        assert lines[1] == "0,1.0,2.0,3.0,0.1,0.2,0.3"
