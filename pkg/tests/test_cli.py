import csv
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mctr.cli import main
from mctr.config import ConfigErrors, ExperimentConfig, dump_config, parse_config, section_keys
from mctr.metrics import resample_path
from mctr.sim import EpisodeLog

MINIMAL = """\
[experiment]
controllers = MCTR
tracks = O
seeds = 0
"""


def _write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.controllers == ("MCTR",) and cfg.tracks == ("O",) and cfg.seeds == (0,)
    assert cfg.laps == ExperimentConfig().laps and cfg.sim == ExperimentConfig().sim


def test_colon_delimiter_and_comments():
    cfg = parse_config("# header\n[experiment]\ncontrollers: FTG, DTR\ntracks: F\nseeds: 1 2  # inline\n")
    assert cfg.controllers == ("FTG", "DTR") and cfg.seeds == (1, 2)


def test_out_of_range_names_the_key():
    with pytest.raises(ConfigErrors) as ei:
        parse_config(MINIMAL + "[pursuit]\nk_v: -1\n")
    assert ei.value.errors == ["[pursuit] k_v = -1 is out of range: must be non-negative"]


def test_every_error_is_reported():
    text = MINIMAL + "[pursuit]\nk_v = -1\n[smoothing]\nsg_window = 4\nbogus = 1\n"
    with pytest.raises(ConfigErrors) as ei:
        parse_config(text)
    joined = "\n".join(ei.value.errors)
    assert len(ei.value.errors) == 3
    assert "k_v" in joined and "sg_window" in joined and "bogus" in joined


def test_missing_required_keys():
    with pytest.raises(ConfigErrors) as ei:
        parse_config("[experiment]\ncontrollers = MCTR\n")
    assert any("tracks" in e for e in ei.value.errors) and any("seeds" in e for e in ei.value.errors)


def test_unknown_controller_and_track():
    with pytest.raises(ConfigErrors) as ei:
        parse_config("[experiment]\ncontrollers = MPC\ntracks = Q\nseeds = 0\n")
    assert len(ei.value.errors) == 2


def test_dump_round_trips():
    cfg = parse_config(MINIMAL + "[sim]\nactuation_mode = THROTTLE_BRAKE\nnoise_sigma = 0.02\n"
                       "[vehicle]\nwheelbase = 0.3\n")
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert cfg.controller.longitudinal == "pid" and cfg.sim.wheelbase == 0.3
    assert set(section_keys()) >= {"experiment", "sim", "vehicle", "pursuit", "smoothing", "pid"}


def test_validate_command_prints_resolved(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, MINIMAL))]) == 0
    out = capsys.readouterr().out
    assert "[pursuit]" in out and "k_v = 0.3" in out


def test_validate_command_exit_code(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, MINIMAL + "[pursuit]\nk_v: -1\n"))]) == 2
    assert "k_v" in capsys.readouterr().err


def test_unknown_track_exits_2(tmp_path):
    bad = "[experiment]\ncontrollers = MCTR\ntracks = Z\nseeds = 0\n"
    assert main(["run", str(_write(tmp_path, bad))]) == 2


def test_unknown_controller_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as ei:
        main(["run", str(_write(tmp_path, MINIMAL)), "--controller", "MPC"])
    assert ei.value.code == 2


def test_tracks_list(capsys):
    assert main(["tracks", "list"]) == 0
    names = [ln.split()[0] for ln in capsys.readouterr().out.splitlines()[1:]]
    assert names == ["O", "F", "M", "W"]


def test_tracks_export(tmp_path):
    assert main(["tracks", "export", "F", str(tmp_path / "f.track")]) == 0
    assert (tmp_path / "f.track").read_text().startswith("TRACK F")


EXPERIMENT = """\
[experiment]
controllers = MCTR, DTR, FTG
tracks = O
seeds = 0, 1
output_dir = {out}
"""


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    out = root / "out"
    cfg = _write(root, EXPERIMENT.format(out=out))
    assert main(["run", str(cfg), "--jobs", "1", "--trace"]) == 0
    return out


def test_run_writes_every_episode(finished_run):
    eps = sorted(p.name for p in (finished_run / "episodes").iterdir())
    assert eps == sorted(f"{k}_O_s{s}.csv" for k in ("MCTR", "DTR", "FTG") for s in (0, 1))
    rows = _rows(finished_run / "summary.csv")
    assert [(r["controller"], r["track"]) for r in rows] == [("MCTR", "O"), ("DTR", "O"), ("FTG", "O")]
    assert all(r["runs"] == "2" for r in rows)
    assert len(_rows(finished_run / "metrics.csv")) == 6
    assert (finished_run / "experiment.ini").exists()


def test_run_with_trace_writes_frames(finished_run):
    text = (finished_run / "traces" / "MCTR_O_s0.txt").read_text()
    assert text.startswith("FRAME 0") and "np." not in text[:20000]


def test_plots_are_valid_svg(finished_run):
    for name in ("trajectory_O.svg", "curvature_O.svg"):
        root = ET.parse(finished_run / "plots" / name).getroot()
        assert root.tag.endswith("svg")


def test_curvature_plot_sample_counts(finished_run):
    root = ET.parse(finished_run / "plots" / "curvature_O.svg").getroot()
    lines = {e.get("data-episode"): int(e.get("data-samples")) for e in root.iter()
             if e.get("class") == "episode"}
    assert len(lines) == 6
    log = EpisodeLog.from_csv(finished_run / "episodes" / "MCTR_O_s0.csv")
    xy = np.column_stack([log.column("x"), log.column("y")])
    key = next(k for k in lines if "MCTR" in k and k.endswith("0"))
    assert lines[key] == len(resample_path(xy))


def test_report_reproduces_summary(finished_run, tmp_path):
    before = {n: (finished_run / n).read_bytes() for n in ("metrics.csv", "summary.csv")}
    assert main(["report", str(finished_run)]) == 0
    for n, data in before.items():
        assert (finished_run / n).read_bytes() == data


def test_report_rejects_foreign_directory(tmp_path):
    assert main(["report", str(tmp_path)]) == 1


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_repeat_run_is_byte_identical(tmp_path):
    text = "[experiment]\ncontrollers = MCTR, FTG\ntracks = O\nseeds = 3\noutput_dir = {out}\n"
    trees = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        cfg = _write(tmp_path, text.format(out=tmp_path / "same"), f"c{k}.ini")
        assert main(["run", str(cfg), "--no-timing", "--jobs", "1", "--output", str(out)]) == 0
        trees.append(_tree_bytes(out))
    # the resolved config records its own output directory; everything else must match exactly
    a, b = trees
    a.pop("experiment.ini"), b.pop("experiment.ini")
    assert a == b and "episodes/MCTR_O_s3.csv" in a


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mctr", "tracks", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("name")
