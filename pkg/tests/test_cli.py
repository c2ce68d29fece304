import json
import subprocess
import sys

import pytest

from plateshot import __version__
from plateshot.cli import EXIT_BACKEND, EXIT_INVALID, EXIT_OK, main


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--seed", "4", "--frames", "8", "--background", "clutter:2",
                 "--motion", "linear:1,2", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def run_dir(scene_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["run", "--frames", str(scene_dir / "frames"),
                 "--annotations", str(scene_dir / "annotations.json"),
                 "--set", "pipeline.workers=1", "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_synth_layout(scene_dir):
    assert len(list((scene_dir / "frames").glob("frame_*.ppm"))) == 8
    assert (scene_dir / "annotations.json").exists()
    assert len((scene_dir / "truth.jsonl").read_text().splitlines()) == 8


def test_run_writes_outputs(run_dir, capsys):
    for name in ("detections.jsonl", "recognitions.jsonl", "plates.json", "timing.json"):
        assert (run_dir / name).exists()
    assert json.loads((run_dir / "plates.json").read_text()) == {"0": "ABC1234"}


def test_eval_on_directory_and_file(scene_dir, run_dir, tmp_path, capsys):
    assert main(["eval", "--pred", str(run_dir), "--truth", str(scene_dir / "truth.jsonl")]) == 0
    report = json.loads((run_dir / "eval.json").read_text())
    assert report["f1"] == 1.0 and report["acc7"] == 1.0
    assert "F1" in capsys.readouterr().out
    dest = tmp_path / "r.json"
    assert main(["eval", "--pred", str(run_dir / "detections.jsonl"),
                 "--truth", str(scene_dir / "truth.jsonl"), "--report", str(dest)]) == 0
    # without plates.json the plate field on each detection is used
    assert json.loads(dest.read_text())["acc7"] == 1.0


def test_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_one(scene_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["run", "--bogus"])
    assert info.value.code == EXIT_INVALID
    with pytest.raises(SystemExit) as info:
        main(["synth", "--motion", "zigzag", "--out", str(tmp_path)])
    assert info.value.code == EXIT_INVALID
    assert main(["run", "--frames", str(tmp_path / "none"), "--annotations",
                 str(scene_dir / "annotations.json"), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["run", "--frames", str(scene_dir / "frames"), "--annotations",
                 str(scene_dir / "annotations.json"), "--set", "nope=1",
                 "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_unreachable_backend_exits_two(scene_dir, tmp_path):
    code = main(["run", "--frames", str(scene_dir / "frames"),
                 "--annotations", str(scene_dir / "annotations.json"),
                 "--set", "recog.backend=external:http://127.0.0.1:9",
                 "--set", "recog.timeout_s=1", "--out", str(tmp_path / "o")])
    assert code == EXIT_BACKEND


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "plateshot", "version"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("plateshot ")
