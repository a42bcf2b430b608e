import json
import os

import numpy as np
import pytest

from celllineage import pgm
from celllineage.cli import PipelineConfig, build_parser, main


def run(argv):
    return main(argv)


def dir_bytes(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as f:
            out[name] = f.read()
    return out


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    cfg = {
        "width": 128,
        "height": 128,
        "frames": 8,
        "n_init": 3,
        "radius_range": [8.0, 10.0],
        "drift_sigma": 1.0,
        "collision_script": [[6, 1, 2]],
        "noise_sigma": 0.02,
        "rng_seed": 7,
    }
    cfg_path = d / "sim.json"
    cfg_path.write_text(json.dumps(cfg))
    out = d / "gt"
    assert run(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    return str(out)


def test_simulate_outputs(sim_dir, capsys):
    names = sorted(os.listdir(sim_dir))
    assert "t001.pgm" in names and "t008.pgm" in names
    assert "mask001.pgm" in names and "mask008.pgm" in names
    assert "res_track.txt" in names and "events.txt" in names
    img = pgm.read_pgm8(os.path.join(sim_dir, "t001.pgm"))
    assert img.shape == (128, 128)
    mask = pgm.read_pgm16(os.path.join(sim_dir, "mask001.pgm"))
    assert set(np.unique(mask)) - {0} == {1, 2, 3}


def test_simulate_deterministic_bytes(sim_dir, tmp_path):
    cfg_path = os.path.join(os.path.dirname(sim_dir), "sim.json")
    again = tmp_path / "again"
    assert run(["simulate", "--config", cfg_path, "--out", str(again)]) == 0
    assert dir_bytes(sim_dir) == dir_bytes(str(again))


def test_simulate_seed_override(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run(["simulate", "--out", str(a), "--seed", "1"]) == 0
    assert run(["simulate", "--out", str(b), "--seed", "2"]) == 0
    assert dir_bytes(str(a)) != dir_bytes(str(b))


def test_track_and_evaluate(sim_dir, tmp_path, capsys):
    pred = tmp_path / "pred"
    assert run(["track", "--in", sim_dir, "--out", str(pred)]) == 0
    names = sorted(os.listdir(str(pred)))
    assert "mask001.pgm" in names and "res_track.txt" in names and "events.txt" in names
    capsys.readouterr()

    assert run(["evaluate", "--gt", sim_dir, "--pred", str(pred)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    scores = {ln.split()[0]: float(ln.split()[1]) for ln in lines}
    assert 0.0 <= scores["SEG"] <= 1.0 and 0.0 <= scores["TRA"] <= 1.0
    assert scores["SEG"] > 0.5 and scores["TRA"] > 0.5
    report = json.load(open(pred / "report.json"))
    assert report["seg"] == pytest.approx(scores["SEG"], abs=1e-6)
    assert report["tra"] == pytest.approx(scores["TRA"], abs=1e-6)
    assert set(report["counts"]) == {"NS", "FN", "FP", "ED", "EA", "EC"}


def test_track_deterministic_bytes(sim_dir, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run(["track", "--in", sim_dir, "--out", str(a)]) == 0
    assert run(["track", "--in", sim_dir, "--out", str(b)]) == 0
    assert dir_bytes(str(a)) == dir_bytes(str(b))


def test_track_baseline_beats_nothing(sim_dir, tmp_path, capsys):
    base = tmp_path / "base"
    assert run(["track", "--in", sim_dir, "--out", str(base), "--baseline"]) == 0
    events = (base / "events.txt").read_text()
    assert "COLLISION" not in events and "MITOSIS" not in events


def test_track_masks_ingestion(sim_dir, tmp_path, capsys):
    # feed the ground-truth masks straight through the linker
    cfg = {"segmentation": "masks"}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert run(["track", "--config", str(cfg_path), "--in", sim_dir, "--out", str(out)]) == 0
    capsys.readouterr()
    assert run(["evaluate", "--gt", sim_dir, "--pred", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    scores = {ln.split()[0]: float(ln.split()[1]) for ln in lines}
    assert scores["SEG"] == pytest.approx(1.0)


def test_overlay(sim_dir, tmp_path, capsys):
    out = tmp_path / "ov"
    assert run(["overlay", "--in", sim_dir, "--out", str(out)]) == 0
    files = sorted(os.listdir(str(out)))
    assert files == ["overlay%03d.ppm" % t for t in range(1, 9)]
    rgb = pgm.read_ppm(os.path.join(str(out), "overlay001.ppm"))
    assert rgb.shape == (128, 128, 3)
    # boundaries are colored: some pixel differs across channels
    assert np.any(rgb[:, :, 0] != rgb[:, :, 1])


def test_error_paths(tmp_path, capsys):
    missing = tmp_path / "nothing"
    missing.mkdir()
    assert run(["track", "--in", str(missing), "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err
    assert run(["evaluate", "--gt", str(missing), "--pred", str(missing)]) == 1


def test_pipeline_config_from_json(tmp_path):
    doc = {
        "segmentation": "threshold",
        "threshold_method": "fixed",
        "threshold_level": 0.4,
        "tracker": {"search_size": 100},
        "rwalker": {"beta": 90.0},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    cfg = PipelineConfig.from_json(str(path))
    assert cfg.threshold_method == "fixed"
    assert cfg.tracker.search_size == 100
    assert cfg.rwalker.beta == 90.0


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_console_script_installed():
    import shutil

    exe = shutil.which("lineage")
    assert exe is not None
