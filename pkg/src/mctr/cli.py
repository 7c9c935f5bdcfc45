"""Experiment runner and command line: ``mctr run|report|tracks|validate``."""
from __future__ import annotations

import argparse
import csv
import functools
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import kernels
from .baselines import KINDS, make_controller
from .config import ConfigErrors, ExperimentConfig, default_jobs, dump_config, parse_config, validate_config
from .metrics import aggregate, episode_metrics, write_metrics_csv, write_summary_csv
from .report import curvature_svg, trajectory_svg
from .sim import EpisodeLog, run_episode
from .tracks import builtin_tracks, get_track, polyline_distance

log = logging.getLogger("mctr")

RESOLVED_CONFIG = "experiment.ini"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


@functools.lru_cache(maxsize=None)
def _track(name_or_path):
    return get_track(name_or_path)


def episode_stem(controller: str, track: str, seed: int) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "-", track)
    return f"{controller}_{safe}_s{seed}"


@dataclass(frozen=True)
class Job:
    kind: str
    track: str
    seed: int


def _run_job(cfg: ExperimentConfig, job: Job) -> EpisodeLog:
    track = _track(job.track)
    variant = [v for v in cfg.variants() if v.kind == job.kind][0]
    controller = make_controller(variant, trace=cfg.trace)
    return run_episode(track, controller, cfg.sim_for_episode(), seed=job.seed, trace=cfg.trace)


def _run_job_star(args):
    return _run_job(*args)


def jobs_for(cfg: ExperimentConfig):
    return [Job(k, t, s) for k in cfg.controllers for t in cfg.tracks for s in cfg.seeds]


def _write_column(path, header, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def _read_column(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [float(r[1]) for r in rd]


def summarize(cfg: ExperimentConfig, metrics):
    """One summary row per (controller, track), plus a pooled row per
    controller when several tracks were run."""
    out = []
    for k in cfg.controllers:
        mine = [m for m in metrics if m.controller == k]
        for t in cfg.tracks:
            name = _track(t).name
            rows = [m for m in mine if m.track == name]
            if rows:
                out.append(aggregate(rows))
        if len(cfg.tracks) > 1 and mine:
            s = aggregate(mine)
            out.append(replace(s, track="ALL"))
    return out


def collect(cfg: ExperimentConfig, out: Path, logs) -> list:
    """Single writer for every output file; ``logs`` is in job order."""
    for sub in ("episodes", "lookahead"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    if cfg.record_timing:
        (out / "timing").mkdir(exist_ok=True)
    if cfg.trace:
        (out / "traces").mkdir(exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(dump_config(replace(cfg, output_dir=str(out))))
    metrics = []
    for job, lg in logs:
        stem = episode_stem(job.kind, lg.track, job.seed)
        lg.to_csv(out / "episodes" / f"{stem}.csv")
        _write_column(out / "lookahead" / f"{stem}.csv", ("tick", "kappa"), lg.lookahead_kappa)
        if cfg.record_timing:
            _write_column(out / "timing" / f"{stem}.csv", ("tick", "micros"), lg.tick_micros)
        if cfg.trace:
            (out / "traces" / f"{stem}.txt").write_text("".join(lg.traces))
        if not cfg.record_timing:
            lg.tick_micros = []
        metrics.append(episode_metrics(lg, _track(job.track), cfg.laps))
    write_metrics_csv(out / "metrics.csv", metrics, timing=cfg.record_timing)
    write_summary_csv(out / "summary.csv", summarize(cfg, metrics), timing=cfg.record_timing)
    render_report(cfg, out, logs)
    return metrics


def render_report(cfg: ExperimentConfig, out: Path, logs) -> list:
    """Trajectory and curvature SVGs per track; returns the written paths."""
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    written = []
    for t in cfg.tracks:
        track = _track(t)
        mine = [(job, lg) for job, lg in logs if job.track == t]
        usable = [(job, lg) for job, lg in mine if len(lg.rows) > 1]
        if not usable:
            log.warning("report: no usable episodes on track %s, plots skipped", track.name)
            continue
        traj = [(f"{job.kind} s{job.seed}", [(r[2], r[3]) for r in lg.rows], lg.lookahead_kappa)
                for job, lg in usable]
        curv = [(f"{job.kind} s{job.seed}", [(r[2], r[3]) for r in lg.rows]) for job, lg in usable]
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "-", track.name)
        p1 = plots / f"trajectory_{safe}.svg"
        p2 = plots / f"curvature_{safe}.svg"
        p1.write_text(trajectory_svg(track, traj))
        p2.write_text(curvature_svg(track, curv))
        written += [p1, p2]
    return written


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None, progress=None) -> int:
    """Run every (controller, track, seed) episode and write all outputs.

    Episodes may run in a worker pool; results are gathered in job order and
    written by this process only, so outputs do not depend on scheduling.
    Collisions and timeouts are data; only infrastructure failures return
    non-zero.
    """
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_FAILURE
    todo = jobs_for(cfg)
    n = default_jobs(cfg.jobs if jobs is None else jobs)
    try:
        if n > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=min(n, len(todo))) as pool:
                results = list(pool.map(_run_job_star, [(cfg, j) for j in todo]))
        else:
            results = []
            for j in todo:
                results.append(_run_job(cfg, j))
                if progress:
                    progress(j, results[-1])
        collect(cfg, out, list(zip(todo, results)))
    except Exception:  # infrastructure failure: report and exit non-zero
        log.exception("experiment failed")
        return EXIT_FAILURE
    return EXIT_OK


def load_output(out: Path):
    """Config and logs of a finished experiment directory, read back from its files."""
    cfg = validate_config(out / RESOLVED_CONFIG)
    logs = []
    for job in jobs_for(cfg):
        track = _track(job.track)
        stem = episode_stem(job.kind, track.name, job.seed)
        path = out / "episodes" / f"{stem}.csv"
        if not path.exists():
            log.warning("report: missing episode file %s", path)
            continue
        lg = EpisodeLog.from_csv(path, job.kind, track.name, job.seed)
        lg.dt = cfg.sim.dt
        la = out / "lookahead" / f"{stem}.csv"
        lg.lookahead_kappa = _read_column(la) if la.exists() else []
        tm = out / "timing" / f"{stem}.csv"
        lg.tick_micros = _read_column(tm) if cfg.record_timing and tm.exists() else []
        logs.append((job, lg))
    return cfg, logs


def report(out: Path) -> int:
    """Recompute metrics and summary from the episode files and redraw the plots."""
    cfg, logs = load_output(out)
    metrics = [episode_metrics(lg, _track(job.track), cfg.laps) for job, lg in logs]
    write_metrics_csv(out / "metrics.csv", metrics, timing=cfg.record_timing)
    write_summary_csv(out / "summary.csv", summarize(cfg, metrics), timing=cfg.record_timing)
    render_report(cfg, out, logs)
    return EXIT_OK


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    over = {}
    if args.controller:
        over["controllers"] = tuple(args.controller)
    if args.track:
        over["tracks"] = tuple(args.track)
    if args.seed:
        over["seeds"] = tuple(args.seed)
    if args.trace:
        over["trace"] = True
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.output:
        over["output_dir"] = args.output
    if args.no_timing:
        over["record_timing"] = False
    if not over:
        return cfg
    # re-validate through the text form so overrides get the same checks as the file
    return parse_config(dump_config(replace(cfg, **over)), "<command line>")


def _print_summary(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'controller':<14}{'track':<7}{'runs':>5}{'t_lap':>9}{'eps_k':>9}{'j_lat':>10}{'pass%':>8}")
    for r in rows:
        print(f"{r['controller']:<14}{r['track']:<7}{r['runs']:>5}{float(r['t_lap_mean']):>9.3f}"
              f"{float(r['eps_k_mean']):>9.4f}{float(r['j_lat_mean']):>10.2f}{float(r['pass_pct']):>8.1f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mctr", description="Reactive racing controller experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--controller", action="append", choices=KINDS)
    r.add_argument("--track", action="append")
    r.add_argument("--seed", action="append", type=int)
    r.add_argument("--trace", action="store_true", help="dump triangulation frames for the first lap")
    r.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    r.add_argument("--output", help="output directory")
    r.add_argument("--no-timing", action="store_true", help="leave tick timing columns blank")

    rep = sub.add_parser("report", help="recompute metrics and plots from an output directory")
    rep.add_argument("output_dir")

    t = sub.add_parser("tracks", help="built-in tracks")
    tsub = t.add_subparsers(dest="tracks_command", required=True)
    tsub.add_parser("list")
    ex = tsub.add_parser("export", help="write a track file")
    ex.add_argument("name")
    ex.add_argument("path")

    v = sub.add_parser("validate", help="check a config file and print the resolved values")
    v.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            cfg = validate_config(args.config)
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "tracks":
            if args.tracks_command == "list":
                print(f"{'name':<6}{'length_m':>10}{'width_m':>9}{'points':>8}")
                for name, tr in builtin_tracks().items():
                    print(f"{name:<6}{tr.truth_length:>10.2f}{2 * _half_width(tr):>9.3f}{len(tr.center):>8}")
                return EXIT_OK
            get_track(args.name).save(args.path)
            return EXIT_OK
        if args.command == "run":
            cfg = _apply_overrides(validate_config(args.config), args)
            log.info("kernel backend: %s", kernels.BACKEND)

            def progress(job, lg):
                log.info("%s %s seed %d: %s, laps %s", job.kind, job.track, job.seed, lg.status,
                         [round(t, 3) for t in lg.lap_times])
            code = run_experiment(cfg, progress=progress)
            if code == EXIT_OK:
                _print_summary(Path(cfg.output_dir) / "summary.csv")
            return code
        if args.command == "report":
            out = Path(args.output_dir)
            if not (out / RESOLVED_CONFIG).exists():
                log.error("%s has no %s; not an experiment output directory", out, RESOLVED_CONFIG)
                return EXIT_FAILURE
            code = report(out)
            _print_summary(out / "summary.csv")
            return code
    except ConfigErrors as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


def _half_width(track) -> float:
    p = track.center[0, :2]
    return min(polyline_distance(p, track.inner), polyline_distance(p, track.outer))


if __name__ == "__main__":
    sys.exit(main())
