import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mctr.centerline import finalize
from mctr.control import (ControlCommand, ControllerConfig, FallbackPolicy, PidGains, PidState, PursuitParams,
                          TriangulationController, VehicleParams, lookahead_distance, pid_longitudinal,
                          select_lookahead_point, steering, target_speed)
from mctr.scan_frontend import Scan2D
from mctr.sim import SensorConfig, raycast_scan
from mctr.tracks import get_track

from conftest import corridor_scan
from oracles import brute_lookahead, pid_scalar

VP = VehicleParams()


def test_lookahead_at_rest():
    assert lookahead_distance(0.0, PursuitParams(0.3, 0.8)) == 0.8


def test_lookahead_example():
    assert abs(lookahead_distance(2.0, PursuitParams(0.3, 0.5)) - (0.3 * 2.0 + 0.5)) <= 1e-12
    assert abs(lookahead_distance(2.0, PursuitParams(0.3, 0.5)) - 1.1) <= 1e-12


@given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 3), st.floats(0.01, 3))
def test_lookahead_monotone(v1, v2, kv, lmin):
    p = PursuitParams(kv, lmin)
    lo, hi = sorted((v1, v2))
    assert lookahead_distance(lo, p) <= lookahead_distance(hi, p)


def test_select_straight_interpolates():
    pt, _ = select_lookahead_point(finalize([(1, 0), (2, 0)]), 1.5)
    assert np.allclose(pt, (1.5, 0.0), atol=1e-12)


def test_select_saturates_at_last_point():
    pt, idx = select_lookahead_point(finalize([(0.1, 0), (0.3, 0.1), (0.4, 0.2)]), 2.0)
    assert np.array_equal(pt, (0.4, 0.2)) and idx == 2


def test_select_on_circle_matches_brute_force():
    ang = np.linspace(-math.pi / 2, math.pi / 2, 60)
    pts = np.column_stack([3 + 3 * np.cos(ang + math.pi), 3 * np.sin(ang + math.pi)])
    pts = pts[np.argsort(-np.arctan2(pts[:, 1] - 0, pts[:, 0] - 3))]
    path = finalize(pts)
    pt, _ = select_lookahead_point(path, 3.0)
    assert abs(math.hypot(*pt) - 3.0) <= 1e-9
    assert np.allclose(pt, brute_lookahead(path.points, 3.0), atol=1e-7)


def test_steering_straight_ahead():
    assert steering((2.0, 0.0), VP, 1.0) == 0.0


def test_steering_formula_example():
    vp = VehicleParams(wheelbase=0.33, max_steer=1.0)
    target = (math.cos(math.pi / 6), math.sin(math.pi / 6))
    expected = math.atan(0.33 * 2 * 0.5 / 1.0)
    assert abs(steering(target, vp, 1.0) - expected) <= 1e-12
    assert abs(expected - math.atan(0.33)) <= 1e-12
    assert expected == pytest.approx(0.3187, abs=1e-4)


@given(st.floats(0.1, 5), st.floats(-5, 5), st.floats(0.2, 4))
def test_steering_mirror_symmetry(x, y, ld):
    assert steering((x, -y), VP, ld) == -steering((x, y), VP, ld)


def test_steering_clamped():
    assert steering((0.1, 5.0), VP, 0.2) == VP.max_steer


def test_speed_straight_is_v_max():
    assert target_speed(0.0, VP) == VP.v_max


def test_speed_formula_example():
    vp = VehicleParams(friction_mu=0.8, a_max_lat=9.81, v_max=10.0)
    expected = math.sqrt(0.8 * 9.81 / 0.5)
    assert abs(target_speed(0.5, vp) - expected) <= 1e-12
    assert expected == pytest.approx(3.962, abs=1e-3)


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_speed_monotone_and_budget(k1, k2):
    if abs(k1) > abs(k2):
        k1, k2 = k2, k1
    assert target_speed(k2, VP) <= target_speed(k1, VP)
    v = target_speed(k2, VP)
    if VP.v_min < v < VP.v_max:
        assert v * v * abs(k2) <= VP.friction_mu * VP.a_max_lat + 1e-9


def test_pid_zero_error():
    thr, brk, _ = pid_longitudinal(2.0, 2.0, 0.025, PidGains(), PidState())
    assert (thr, brk) == (0.0, 0.0)


def test_pid_proportional_only():
    g = PidGains(0.5, 0.0, 0.0, 0.0, 0.0, 0.0)
    thr, brk, _ = pid_longitudinal(1.4, 1.0, 0.025, g, PidState())
    assert abs(thr - 0.2) <= 1e-12 and brk == 0.0


def test_pid_integral_accumulation_matches_scalar_oracle():
    g = PidGains(0.0, 0.05, 0.0, 0.0, 0.0, 0.0, integral_limit=1e9)
    dt = 0.025
    state = PidState()
    got = []
    for _ in range(200):
        thr, brk, state = pid_longitudinal(1.3, 1.0, dt, g, state)
        assert brk == 0.0
        got.append(thr)
    oracle = pid_scalar([1.3 - 1.0] * 200, 0.0, 0.05, 0.0, dt, 1e9)
    assert got == oracle
    # linear growth until the pedal clamp
    k = next(i for i, u in enumerate(got) if u == 1.0)
    assert k > 10 and all(u == 1.0 for u in got[k:])
    assert np.allclose(np.diff(got[:k]), 0.05 * 0.3, atol=1e-15)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=60), st.floats(0, 2), st.floats(0, 0.2),
       st.floats(0, 0.05), st.floats(0.5, 100))
def test_pid_throttle_channel_matches_oracle(errors, kp, ki, kd, limit):
    errors = [e for e in errors if e >= 0.0] or [0.0]
    g = PidGains(kp, ki, kd, 0.0, 0.0, 0.0, limit)
    state = PidState()
    got = []
    for e in errors:
        thr, _, state = pid_longitudinal(e, 0.0, 0.025, g, state)
        got.append(thr)
    assert got == pid_scalar(errors, kp, ki, kd, 0.025, limit)


@given(st.floats(-3, 3))
def test_pid_pedals_exclusive(e):
    thr, brk, _ = pid_longitudinal(e, 0.0, 0.025, PidGains(1, 0.1, 0, 1, 0.1, 0), PidState())
    assert thr == 0.0 or brk == 0.0


def test_pid_continuous_at_handoff():
    g = PidGains(0.7, 0.0, 0.0, 0.9, 0.0, 0.0)
    for eps in (1e-3, 1e-6, 1e-9):
        thr, _, _ = pid_longitudinal(eps, 0.0, 0.025, g, PidState())
        _, brk, _ = pid_longitudinal(-eps, 0.0, 0.025, g, PidState())
        assert thr <= 0.7 * eps + 1e-15 and brk <= 0.9 * eps + 1e-15


def test_pid_rejects_bad_dt():
    with pytest.raises(ValueError):
        pid_longitudinal(1.0, 0.0, 0.0, PidGains(), PidState())


def test_tick_straight_corridor():
    ctrl = TriangulationController()
    cmd = ctrl.tick(corridor_scan(sigma=0.0), 2.0)
    assert not cmd.fallback
    assert abs(cmd.steering) < 0.05
    assert cmd.target_speed == VP.v_max


def test_tick_no_returns_falls_back():
    scan = Scan2D(-0.75 * math.pi, 1.5 * math.pi / 1080, np.full(1081, np.inf), 10.0)
    cmd = TriangulationController().tick(scan, 2.0)
    assert cmd.fallback and cmd.steering == 0.0 and cmd.target_speed == VP.v_min


def test_tick_left_curve_steers_left():
    track = get_track("O")  # counter-clockwise loop: the corridor bends left
    scan = raycast_scan(track, track.start_pose, SensorConfig(noise_sigma=0.0))
    cmd = TriangulationController().tick(scan, 2.0)
    assert cmd.steering > 0.0


@pytest.mark.parametrize("offset,heading", [(0.3, 0.0), (-0.25, 0.1), (0.0, -0.15)])
def test_tick_mirrored_scan_negates_steering(offset, heading):
    scan = corridor_scan(offset=offset, heading=heading, sigma=0.0)
    a = TriangulationController().tick(scan, 2.0).steering
    b = TriangulationController().tick(scan.mirrored(), 2.0).steering
    assert a != 0.0
    # clustering walks the beams in the opposite order on the mirrored scan,
    # so the boundary samples are not exact mirror images
    assert b == pytest.approx(-a, abs=0.02)


def test_tick_symmetric_scan_steers_straight():
    cmd = TriangulationController().tick(corridor_scan(sigma=0.0), 1.0)
    mirrored = TriangulationController().tick(corridor_scan(sigma=0.0).mirrored(), 1.0)
    assert abs(cmd.steering) <= 1e-9 or cmd.steering == pytest.approx(-mirrored.steering, abs=1e-9)


def test_tick_deterministic():
    scan = corridor_scan(offset=0.2, heading=0.05, sigma=0.01)
    a = TriangulationController().tick(scan, 1.5)
    b = TriangulationController().tick(scan, 1.5)
    assert a == b


def test_tick_pid_mode_outputs_pedals():
    ctrl = TriangulationController(ControllerConfig(longitudinal="pid"))
    cmd = ctrl.tick(corridor_scan(sigma=0.0), 0.0)
    assert cmd.throttle > 0.0 and cmd.brake == 0.0


def test_hold_last_fallback():
    cfg = ControllerConfig(fallback=FallbackPolicy("HOLD_LAST", 2))
    ctrl = TriangulationController(cfg)
    good = ctrl.tick(corridor_scan(offset=0.2, sigma=0.0), 2.0)
    empty = Scan2D(-0.75 * math.pi, 1.5 * math.pi / 1080, np.full(1081, np.inf), 10.0)
    held = [ctrl.tick(empty, 2.0) for _ in range(3)]
    assert held[0] == ControlCommand(good.steering, good.target_speed, good.throttle, good.brake, True)
    assert held[1].steering == good.steering
    assert held[2].steering == 0.0 and held[2].target_speed == VP.v_min


def test_trace_is_formatted_lazily():
    ctrl = TriangulationController(trace=True)
    ctrl.tick(corridor_scan(sigma=0.0), 1.0)
    text = ctrl.last_trace
    assert text.startswith("FRAME 0") and "CENTERLINE" in text and "np." not in text


@pytest.mark.parametrize("kwargs", [dict(wheelbase=0), dict(v_min=8.0), dict(max_steer=-0.1)])
def test_vehicle_params_validation(kwargs):
    with pytest.raises(ValueError):
        VehicleParams(**kwargs)


def test_pursuit_params_validation():
    with pytest.raises(ValueError, match="k_v"):
        PursuitParams(k_v=-1.0)
