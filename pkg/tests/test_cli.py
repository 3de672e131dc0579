import json
import subprocess
import sys

import pytest

from asyncmot.cli import main


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scenario.json").write_text(json.dumps({"preset": "smoke", "duration": 4.0}))
    assert main(["simulate", str(d / "scenario.json"), "--seed", "2", "--out", str(d / "scene.jsonl")]) == 0
    return d


def test_track_then_eval(scene, capsys):
    d = scene
    assert main(["track", str(d / "scene.jsonl"), "--out", str(d / "tracks.jsonl")]) == 0
    assert main(["eval", str(d / "tracks.jsonl"), str(d / "scene.jsonl"), "--out-dir", str(d / "report")]) == 0
    out = capsys.readouterr().out
    assert "overall" in out
    report = json.loads((d / "report" / "report.json").read_text())
    assert report["amota"] == pytest.approx(1.0)
    for name in ("report.txt", "recall.csv", "recall.png"):
        assert (d / "report" / name).stat().st_size > 0


def test_track_flags(scene):
    d = scene
    out = d / "async.jsonl"
    assert main(["track", str(d / "scene.jsonl"), "--out", str(out), "--emit-async-snapshots"]) == 0
    kinds = json.loads(out.read_text().splitlines()[0])["kinds"]
    assert kinds == ["sync", "async"] * 8
    assert main(["track", str(d / "scene.jsonl"), "--out", str(out), "--sync-only", "--emit-async-snapshots"]) == 0
    assert json.loads(out.read_text().splitlines()[0])["kinds"] == ["sync"] * 8


def test_track_with_config(scene, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("version: 1\ngaam: false\nparams:\n  theta_del: 0.05\n")
    assert main(["track", str(scene / "scene.jsonl"), "--config", str(cfg), "--out", str(tmp_path / "t.jsonl")]) == 0


def test_ablate(scene, tmp_path, capsys):
    args = ["ablate", str(scene / "scene.jsonl"), "--toggle", "gaam", "--score-strategy", "noisy_or,max"]
    assert main(args + ["--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "ablation.csv").read_text().splitlines()
    assert len(rows) == 1 + 4
    assert (tmp_path / "ablation.png").stat().st_size > 0
    assert "AMOTA" in (tmp_path / "ablation.txt").read_text()


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "track" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["track"],
        ["eval", "a.jsonl"],
        ["ablate", "--toggle", "warp"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_ablate_needs_scenes(capsys):
    assert main(["ablate"]) == 1
    assert main(["ablate", "--suite-seeds", "1", "--facm-phases", "ma,zz"]) == 1


def test_data_errors_exit_two(scene, tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("gaam: false\n")
    assert main(["track", str(scene / "scene.jsonl"), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 2
    assert "missing config key 'version'" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert main(["track", str(bad), "--out", str(tmp_path / "t")]) == 2
    assert main(["track", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "t")]) == 2
    (tmp_path / "s.json").write_text(json.dumps({"colour": "red"}))
    assert main(["simulate", str(tmp_path / "s.json"), "--out", str(tmp_path / "x.jsonl")]) == 2


def test_numerical_fault_exits_three(scene, tmp_path, monkeypatch):
    from asyncmot import cli
    from asyncmot.estimation import NumericalFault

    def boom(*a, **k):
        raise NumericalFault("covariance not PSD")

    monkeypatch.setattr(cli, "run_scene", boom)
    assert main(["track", str(scene / "scene.jsonl"), "--out", str(tmp_path / "t")]) == 3


def test_module_entry_point(scene, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("version: 1\nparams: {theta_fm: abc}\n")
    run = lambda *a: subprocess.run([sys.executable, "-m", "asyncmot", *a], capture_output=True, text=True)  # noqa: E731
    assert run("--version").returncode == 0
    bad = run("track", str(scene / "scene.jsonl"), "--config", str(cfg), "--out", str(tmp_path / "t"))
    assert bad.returncode == 2 and "params.theta_fm" in bad.stderr and "Traceback" not in bad.stderr
