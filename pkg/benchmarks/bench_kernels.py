"""Time the compiled kernels against their numpy twins on controller-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from mctr import kernels
from mctr.centerline import ccma_band
from mctr.scan_frontend import subsample_scan
from mctr.sim import SensorConfig, raycast_scan
from mctr.tracks import get_track


def workloads():
    track = get_track("F")
    pose = track.start_pose
    sensor = SensorConfig(noise_sigma=0.0)
    scan = raycast_scan(track, pose, sensor)
    xy = scan.to_xy()
    xs, ys = np.ascontiguousarray(xy[:, 0]), np.ascontiguousarray(xy[:, 1])
    valid = scan.finite.astype(np.uint8)
    boundary = subsample_scan(scan, 0.1).points
    ab = np.ascontiguousarray(ccma_band(120, 2.0, 1.0))
    rhs = np.ascontiguousarray(np.random.default_rng(0).normal(size=(120, 2)))
    return {
        "delaunay": lambda m: m.delaunay(boundary),
        "cluster_beams": lambda m: m.cluster_beams(xs, ys, valid, 0.1),
        "raycast": lambda m: m.raycast(track.segments, pose[0], pose[1], pose[2], sensor.angle_min,
                                       sensor.angle_increment, sensor.beams, sensor.range_max),
        "solve_banded_spd": lambda m: m.solve_banded_spd(ab, rhs),
    }, len(boundary)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backs = kernels.backends()
    jobs, n_boundary = workloads()
    print(f"default backend: {kernels.BACKEND}; {n_boundary} boundary points, 1081 beams")
    names = list(backs)
    print(f"{'kernel':<18}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}")
    for kname, fn in jobs.items():
        best = {}
        for bname, mod in backs.items():
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            best[bname] = min(timer.repeat(args.repeat, number)) / number * 1e6
        speed = best["python"] / best["compiled"] if "compiled" in best else math.nan
        print(f"{kname:<18}" + "".join(f"{best[n]:>16.1f}" for n in names) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
