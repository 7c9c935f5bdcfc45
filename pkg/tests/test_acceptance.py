"""Acceptance checks. Each test prints one ``CRITERION n: PASS|FAIL`` line with
the measured values, then asserts."""
import math
import time

import numpy as np
import pytest

from mctr.baselines import make_controller
from mctr.centerline import SmoothingWeights, ccma_energy, ccma_smooth
from mctr.cli import main
from mctr.control import (PidGains, PidState, PursuitParams, VehicleParams, lookahead_distance,
                          pid_longitudinal, steering, target_speed)
from mctr.metrics import aggregate, episode_metrics
from mctr.sim import SensorConfig, SimConfig, run_episode
from mctr.tracks import get_track
from mctr.triangulate import NotEnoughGeometry, delaunay

from oracles import dense_ccma, empty_circle_violations, pid_scalar

pytestmark = pytest.mark.acceptance

SEEDS = range(5)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def _summaries(kinds, tracks, seeds=SEEDS, sim=SimConfig()):
    out = {}
    for kind in kinds:
        for name in tracks:
            track = get_track(name)
            runs = [episode_metrics(run_episode(track, make_controller(kind), sim, seed=s), track, sim.laps)
                    for s in seeds]
            out[kind, name] = aggregate(runs)
    return out


def test_criterion_1_ccma_oracle(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_dev, worst_gain = 0.0, -math.inf
    for _ in range(100):
        n = int(rng.integers(5, 201))
        lam, mu = rng.uniform(0, 10, size=2)
        p = np.cumsum(rng.normal(size=(n, 2)), axis=0)
        q = ccma_smooth(p, SmoothingWeights(float(lam), float(mu)))
        worst_dev = max(worst_dev, float(np.max(np.abs(q - dense_ccma(p, lam, mu)))))
        worst_gain = max(worst_gain, ccma_energy(q, p, lam, mu) - ccma_energy(p, p, lam, mu))
    dt = time.perf_counter() - t0
    ok = worst_dev <= 1e-9 and worst_gain <= 0.0 and dt < 5.0
    verdict(1, ok, f"max |banded - dense| = {worst_dev:.2e}, max E(out)-E(in) = {worst_gain:.3e}, {dt:.2f} s")
    assert ok


def test_criterion_2_delaunay_suite(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    bad = checked = 0
    for k in range(1000):
        n = int(rng.integers(3, 201))
        pts = rng.random((n, 2))
        if k % 4 == 3:  # snapped to a grid: many cocircular and collinear subsets
            pts = np.unique(np.round(pts * 8) / 8, axis=0)
        try:
            tri = delaunay(pts)
        except NotEnoughGeometry:
            continue
        checked += 1
        bad += empty_circle_violations(pts, tri.triangles, 1e-9) > 0
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 30.0
    verdict(2, ok, f"{checked} sets checked, {bad} with an empty-circle violation, {dt:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def f_track_results():
    t0 = time.perf_counter()
    res = _summaries(("MCTR", "DTR", "MCTR_NO_CCMA"), ("F",))
    return res, time.perf_counter() - t0


def test_criterion_3_lap_time_ordering(verdict, f_track_results):
    res, dt = f_track_results
    m, d = res["MCTR", "F"].t_lap, res["DTR", "F"].t_lap
    margin = (d.mean - m.mean) / d.mean
    ok = m.n == 5 and d.n == 5 and margin >= 0.05 and dt < 120.0
    verdict(3, ok, f"t_lap MCTR {m.mean:.3f} +- {m.std:.3f} s vs DTR {d.mean:.3f} +- {d.std:.3f} s, "
                   f"margin {100 * margin:.1f}% (need >= 5%), laps {m.n}/{d.n}, {dt:.1f} s")
    assert ok


def test_criterion_4_smoothness_ordering(verdict, f_track_results):
    res, _ = f_track_results
    jm, jd, jn = (res[k, "F"].j_lat.mean for k in ("MCTR", "DTR", "MCTR_NO_CCMA"))
    em, en = res["MCTR", "F"].eps_k.mean, res["MCTR_NO_CCMA", "F"].eps_k.mean
    checks = {"J_lat(MCTR) < J_lat(DTR)": jm < jd, "J_lat(MCTR) < J_lat(NO_CCMA)": jm < jn,
              "eps_k(MCTR) < eps_k(NO_CCMA)": em < en}
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(4, ok, f"J_lat MCTR {jm:.2f} DTR {jd:.2f} NO_CCMA {jn:.2f}; eps_k MCTR {em:.4f} NO_CCMA {en:.4f}"
                   + (f"; violated: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_5_pass_rates(verdict):
    t0 = time.perf_counter()
    res = _summaries(("MCTR", "DTR", "FTG"), ("O", "F", "M", "W"))
    dt = time.perf_counter() - t0
    rate = {k: float(np.mean([res[k, t].pass_pct for t in ("O", "F", "M", "W")])) for k in ("MCTR", "DTR", "FTG")}
    ok = rate["MCTR"] >= rate["DTR"] >= rate["FTG"] and rate["MCTR"] >= 90.0 and dt < 300.0
    verdict(5, ok, f"PASS MCTR {rate['MCTR']:.0f}% DTR {rate['DTR']:.0f}% FTG {rate['FTG']:.0f}% "
                   f"over 4 tracks x 5 runs, {dt:.1f} s")
    assert ok


def test_criterion_6_sensor_parity(verdict):
    track = get_track("O")
    flat = SimConfig(sensor=SensorConfig(noise_sigma=0.0))
    lifted = SimConfig(sensor=SensorConfig(noise_sigma=0.0, mode="3d"))
    a = run_episode(track, make_controller("MCTR"), flat)
    b = run_episode(track, make_controller("MCTR"), lifted)
    ta = a.lap_times[0] if a.lap_times else math.nan
    tb = b.lap_times[0] if b.lap_times else math.nan
    rel = abs(ta - tb) / ta
    ok = rel <= 0.05
    verdict(6, ok, f"O lap 2D {ta:.3f} s vs 3D-projected {tb:.3f} s, difference {100 * rel:.2f}% (limit 5%)")
    assert ok


def test_criterion_7_tick_budget(verdict):
    track = get_track("F")
    ticks = []
    for kind in ("MCTR", "DTR", "MCTR_NO_CCMA"):
        ticks += run_episode(track, make_controller(kind), SimConfig(), seed=0).tick_micros
    mean_ms, max_ms = float(np.mean(ticks)) / 1e3, float(np.max(ticks)) / 1e3
    ok = mean_ms < 10.0 and max_ms < 25.0
    verdict(7, ok, f"{len(ticks)} ticks at 1081 beams: mean {mean_ms:.2f} ms, max {max_ms:.2f} ms")
    assert ok


def test_criterion_8_control_formulas(verdict):
    errs = {
        "lookahead": abs(lookahead_distance(2.0, PursuitParams(0.3, 0.5)) - 1.1),
        "steering": abs(steering((math.cos(math.pi / 6), math.sin(math.pi / 6)),
                                 VehicleParams(wheelbase=0.33, max_steer=1.0), 1.0) - math.atan(0.33)),
        "speed": abs(target_speed(0.5, VehicleParams(friction_mu=0.8, a_max_lat=9.81, v_max=10.0))
                     - math.sqrt(0.8 * 9.81 / 0.5)),
    }
    g = PidGains(0.0, 0.01, 0.0, 0.0, 0.0, 0.0, integral_limit=1e9)
    state, got = PidState(), []
    for _ in range(100):
        thr, _, state = pid_longitudinal(2.2, 2.0, 0.025, g, state)
        got.append(thr)
    pid_exact = got == pid_scalar([2.2 - 2.0] * 100, 0.0, 0.01, 0.0, 0.025, 1e9)
    ok = max(errs.values()) <= 1e-12 and pid_exact
    verdict(8, ok, ", ".join(f"{k} err {v:.1e}" for k, v in errs.items()) + f", PID exact: {pid_exact}")
    assert ok


def test_criterion_9_determinism(verdict, tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\ncontrollers = MCTR, DTR, FTG\ntracks = O, F\nseeds = 0, 1\n"
                   f"output_dir = {tmp_path / 'unused'}\n")
    trees = []
    for k, jobs in enumerate(("1", "2")):
        out = tmp_path / f"run{k}"
        assert main(["run", str(cfg), "--no-timing", "--jobs", jobs, "--output", str(out)]) == 0
        trees.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    same = trees[0] == trees[1]
    ok = same and len(trees[0]) > 12
    verdict(9, ok, f"{len(trees[0])} CSV files compared across a serial and a 2-worker run, identical: {same}")
    assert ok
