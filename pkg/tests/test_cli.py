import argparse
import json

import numpy as np
import pytest

from scedlab.cli.common import resolve_config
from scedlab.core.config import Settings
from scedlab.main import main
from scedlab.models import PoolKind, PoolSection
from scedlab.services.ensemble import build_pool
from scedlab.services.storage import read_pool, write_pool
from tests.conftest import CODES_DIR

HAMMING = str(CODES_DIR / "hamming_7_4.alist")


def _simulate(out_dir, *extra):
    return main(
        [
            "simulate",
            "--code",
            HAMMING,
            "--snr",
            "6,10",
            "--min-errors",
            "5",
            "--max-frames",
            "2000",
            "--max-iterations",
            "10",
            "-o",
            str(out_dir),
            *extra,
        ]
    )


def test_simulate_writes_results(tmp_path, capsys):
    assert _simulate(tmp_path) == 0
    out = capsys.readouterr().out
    assert "config digest:" in out
    assert "10.00 dB" in out
    payload = json.loads((tmp_path / "run_fer.json").read_text())
    assert [p["ebn0_db"] for p in payload["points"]] == [6.0, 10.0]
    assert payload["config"]["digest"] == payload["config_digest"]
    assert (tmp_path / "run_fer.csv").exists()


@pytest.mark.parametrize("workers", ["2", "8"])
def test_simulate_reruns_are_byte_identical(tmp_path, workers):
    assert _simulate(tmp_path / "a", "--workers", "1") == 0
    assert _simulate(tmp_path / "b", "--workers", workers) == 0
    assert (tmp_path / "a" / "run_fer.csv").read_bytes() == (tmp_path / "b" / "run_fer.csv").read_bytes()


def test_missing_code_file_is_an_io_error(tmp_path, capsys):
    missing = tmp_path / "nope.alist"
    assert main(["simulate", "--code", str(missing), "-o", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_values_are_usage_errors(tmp_path):
    assert main(["build-ensemble", "--code", HAMMING, "--k-aux", "0", "-o", str(tmp_path)]) == 1


def test_unknown_flag_exits_with_usage_status():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--no-such-flag"])
    assert info.value.code == 1


def test_missing_code_is_reported(tmp_path):
    assert main(["simulate", "-o", str(tmp_path)]) == 1


def test_config_file_with_overrides(tmp_path, capsys):
    config = {
        "code": {"path": HAMMING},
        "decoder": {"kind": "nms", "normalization": 0.8, "max_iterations": 8},
        "simulation": {"snr_points": [7.0], "min_frame_errors": 3, "max_frames": 500, "seed": 4},
        "output": {"directory": str(tmp_path), "prefix": "cfg"},
    }
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps(config))
    assert main(["simulate", "-c", str(path), "--seed", "5"]) == 0
    payload = json.loads((tmp_path / "cfg_fer.json").read_text())
    assert payload["seed"] == 5
    assert payload["config"]["decoder"]["kind"] == "nms"


def test_unknown_config_key_is_rejected(tmp_path):
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps({"code": {"path": HAMMING}, "colour": "blue"}))
    assert main(["simulate", "-c", str(path)]) == 1


def test_verify_reports_an_exact_cover(tmp_path, hamming, capsys):
    pool = build_pool(hamming, PoolSection(kind=PoolKind.LC_TRIPLE, triple_rows="bernoulli", p=0.3, size=3, seed=7))
    ensemble = tmp_path / "triple.txt"
    write_pool(ensemble, pool)
    assert main(["verify", "--code", HAMMING, "--ensemble", str(ensemble), "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "cover: yes (exact)" in out
    report = json.loads((tmp_path / "run_verify.json").read_text())
    assert report["lc"]["is_cover"] and report["lc"]["checked"] == 16
    assert len(report["candidates"]) == 3


def test_verify_without_ensemble_is_a_usage_error(tmp_path):
    assert main(["verify", "--code", HAMMING, "-o", str(tmp_path)]) == 1


def test_build_ensemble_then_simulate(tmp_path, hamming, capsys):
    args = [
        "build-ensemble",
        "--code",
        HAMMING,
        "--ebn0",
        "1.0",
        "-N",
        "12",
        "--max-iterations",
        "10",
        "--pool-kind",
        "bernoulli",
        "--pool-size",
        "20",
        "--p",
        "0.3",
        "-k",
        "2",
        "--k-max",
        "4",
        "-o",
        str(tmp_path),
    ]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "relative coverage:" in out
    for suffix in ("frames.bin", "pool.txt", "coverage.txt", "curve.csv", "selection.json", "ensemble.txt"):
        assert (tmp_path / f"run_{suffix}").exists()

    selection = json.loads((tmp_path / "run_selection.json").read_text())
    ensemble = read_pool(tmp_path / "run_ensemble.txt", hamming)
    assert len(ensemble) == len(selection["chosen"]) <= 2
    assert 0.0 <= selection["relative_coverage"] <= 1.0
    curve = np.loadtxt(tmp_path / "run_curve.csv", delimiter=",", skiprows=1)
    assert curve.shape == (4, 2)
    assert (np.diff(curve[:, 1]) >= 0).all()

    # a second run reuses the stored frames
    assert main(args + ["--frames", str(tmp_path / "run_frames.bin"), "--prefix", "again"]) == 0
    again = json.loads((tmp_path / "again_selection.json").read_text())
    assert again["frames_hash"] == selection["frames_hash"]
    assert again["chosen"] == selection["chosen"]
    assert not (tmp_path / "again_frames.bin").exists()

    sim = ["simulate", "--code", HAMMING, "--ensemble", str(tmp_path / "run_ensemble.txt"), "--snr", "8"]
    sim += ["--min-errors", "3", "--max-frames", "300", "-o", str(tmp_path)]
    assert main(sim) == 0
    payload = json.loads((tmp_path / "run_fer.json").read_text())
    assert len(payload["points"][0]["mean_iterations"]) == 1 + len(ensemble)


def test_coverage_curve_from_stored_records(tmp_path, capsys):
    build = ["build-ensemble", "--code", HAMMING, "--ebn0", "1.0", "-N", "8", "--pool-kind", "row_removed"]
    assert main(build + ["-k", "1", "-o", str(tmp_path)]) == 0
    capsys.readouterr()
    curve = [
        "coverage-curve",
        "--code",
        HAMMING,
        "--pool",
        str(tmp_path / "run_pool.txt"),
        "--coverage",
        str(tmp_path / "run_coverage.txt"),
        "--prefix",
        "curve",
        "-o",
        str(tmp_path),
    ]
    assert main(curve) == 0
    out = capsys.readouterr().out
    assert out.count("K_aux=") == 3


def test_collected_frames_go_to_the_configured_file(tmp_path):
    frames = tmp_path / "store" / "frames.bin"
    args = ["build-ensemble", "--code", HAMMING, "--ebn0", "1.0", "-N", "8", "--pool-kind", "row_removed", "-k", "1"]
    args += ["--frames", str(frames), "-o", str(tmp_path)]
    assert main(args) == 0
    assert frames.exists()
    assert not (tmp_path / "run_frames.bin").exists()
    stamp = frames.stat().st_mtime_ns
    assert main(args + ["--prefix", "again"]) == 0
    assert frames.stat().st_mtime_ns == stamp


def test_runtime_frame_cap_enters_the_digest():
    args = argparse.Namespace(code=HAMMING, max_frames=5000)
    loose = resolve_config(args, Settings(frame_cap=100_000_000))
    tight = resolve_config(args, Settings(frame_cap=1000))
    assert loose.simulation.max_frames == 5000
    assert tight.simulation.max_frames == 1000
    assert tight.selection.frame_cap == 1000
    assert tight.digest() != loose.digest()
    assert resolve_config(args, Settings(frame_cap=5000)).digest() != loose.digest()
