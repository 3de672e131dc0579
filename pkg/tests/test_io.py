import json

import numpy as np
import pytest

from asyncmot.io import FormatError, load_scene, load_tracks, read_scene, save_scene, save_tracks
from asyncmot.sim import dropout_scenario, generate
from asyncmot.tracker import run_scene


@pytest.fixture(scope="module")
def scene():
    return generate(dropout_scenario(1, extrinsic_sigma=0.05, duration=3.0))


def test_scene_round_trip(tmp_path, scene):
    frames, gt = scene
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_scene(a, frames, gt, meta={"seed": 1})
    f2, g2 = load_scene(a)
    save_scene(b, f2, g2, meta={"seed": 1})
    assert a.read_text() == b.read_text()
    assert g2 == gt
    assert [(f.timestamp, f.kind, len(f.dets3d), len(f.dets2d)) for f in f2] == [
        (f.timestamp, f.kind, len(f.dets3d), len(f.dets2d)) for f in frames
    ]
    assert f2[0].dets3d[0].box == frames[0].dets3d[0].box
    assert np.allclose(f2[0].cameras[0].rotation, frames[0].cameras[0].rotation)
    assert read_scene(a).meta == {"seed": 1}


def test_scene_without_gt(tmp_path, scene):
    save_scene(tmp_path / "s.jsonl", scene[0])
    assert load_scene(tmp_path / "s.jsonl")[1] is None


def test_track_round_trip(tmp_path, scene):
    snaps = run_scene(scene[0])
    save_tracks(snaps, tmp_path / "t.jsonl")
    back = load_tracks(tmp_path / "t.jsonl")
    assert back == snaps


def test_empty_snapshots_survive(tmp_path):
    frames, _ = generate(dropout_scenario(0, duration=1.0))
    snaps = run_scene(frames[:1])
    save_tracks(snaps, tmp_path / "t.jsonl")
    assert [s.timestamp for s in load_tracks(tmp_path / "t.jsonl")] == [0.0]


def _mutate(tmp_path, scene, fn):
    path = tmp_path / "s.jsonl"
    save_scene(path, *scene)
    lines = path.read_text().splitlines()
    fn(lines)
    path.write_text("\n".join(lines) + "\n")
    return path


def _edit(lines, idx, edit):
    rec = json.loads(lines[idx])
    edit(rec)
    lines[idx] = json.dumps(rec)


def first_with_3d(lines):
    return next(i for i, l in enumerate(lines) if '"dets3d":[{' in l)


def test_score_out_of_range_names_field_and_line(tmp_path, scene):
    def fn(lines):
        i = first_with_3d(lines)
        _edit(lines, i, lambda r: r["dets3d"][0].update(score=1.5))
        fn.line = i + 1

    path = _mutate(tmp_path, scene, fn)
    with pytest.raises(FormatError, match=rf"line {fn.line}: .*'score'"):
        load_scene(path)


def test_async_frame_with_3d_rejected(tmp_path, scene):
    def fn(lines):
        det = json.loads(lines[first_with_3d(lines)])["dets3d"][0]
        i = next(i for i, l in enumerate(lines) if '"kind":"async"' in l)
        _edit(lines, i, lambda r: r["dets3d"].append(det))

    with pytest.raises(FormatError, match="async"):
        load_scene(_mutate(tmp_path, scene, fn))


def test_non_monotone_timestamps_rejected(tmp_path, scene):
    def fn(lines):
        lines[1], lines[2] = lines[2], lines[1]

    with pytest.raises(FormatError, match="line 3: timestamps"):
        load_scene(_mutate(tmp_path, scene, fn))


def test_unknown_field_strict_and_lenient(tmp_path, scene):
    def fn(lines):
        _edit(lines, 1, lambda r: r.update(weather="rain"))

    path = _mutate(tmp_path, scene, fn)
    with pytest.raises(FormatError, match="line 2: unknown field 'weather'"):
        load_scene(path)
    assert len(load_scene(path, strict=False)[0]) == len(scene[0])


@pytest.mark.parametrize(
    "fn, pattern",
    [
        (lambda lines: lines.pop(0), "line 1: record before header"),
        (lambda lines: lines.insert(1, "{not json"), "line 2: invalid JSON"),
        (lambda lines: _edit(lines, 1, lambda r: r.pop("kind")), "line 2: missing field 'kind'"),
        (lambda lines: _edit(lines, 1, lambda r: r.update(kind="later")), "line 2: field 'kind'"),
        (lambda lines: _edit(lines, 0, lambda r: r.update(version=99)), "line 1: unsupported format"),
        (lambda lines: _edit(lines, first_with_3d(lines), lambda r: r["dets3d"][0]["box"].pop()), "7 numbers"),
    ],
)
def test_malformed_scene(tmp_path, scene, fn, pattern):
    with pytest.raises(FormatError, match=pattern):
        load_scene(_mutate(tmp_path, scene, fn))


def test_track_file_errors(tmp_path, scene):
    path = tmp_path / "t.jsonl"
    save_tracks(run_scene(scene[0]), path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["t"] = 123.0
    path.write_text("\n".join([lines[0], json.dumps(rec)]) + "\n")
    with pytest.raises(FormatError, match="line 2: timestamp 123.0 not listed"):
        load_tracks(path)
    path.write_text(lines[1] + "\n")
    with pytest.raises(FormatError, match="line 1"):
        load_tracks(path)
