import numpy as np
import pytest

from asyncmot import estimation as est
from asyncmot.config import TrackerConfig
from asyncmot.geometry import Box2D, Box3D, CameraModel, project_box
from asyncmot.matching import associate_async, associate_sync
from asyncmot.preprocess import Detection2D, Detection3D, MixDetection, PreprocessOutput

CFG = TrackerConfig()
FRONT = CameraModel.looking("front", 0.0)
CAMS = [FRONT]


def det3(x, y, score=0.8, cls="car"):
    return Detection3D(Box3D(x, y, 0.85, 1.9, 4.6, 1.7, 0.0), score, cls)


def det2(d: Detection3D, score=0.8):
    return Detection2D(project_box(d.box, FRONT), score, d.cls, "front")


def mix(d: Detection3D):
    return MixDetection(d, det2(d), "front", 1.0)


def track(x, y, tid, cls="car"):
    return est.spawn(det3(x, y, cls=cls), tid, 0.0, CFG.params)


def sync(tracks, pre, **kw):
    return associate_sync(tracks, pre, CAMS, CFG.for_class, **kw)


def ids(pairs):
    return [(t.track_id, d) for t, d in pairs]


def test_mix_phase_takes_priority():
    t = track(15, 0, 1)
    m, p3 = mix(det3(15, 0)), det3(15, 0.1)
    res = sync([t], PreprocessOutput("sync", mix=[m], pure3d=[p3]))
    assert ids(res.mp1) == [(1, m)] and res.mp2 == [] and res.unmatched_pure3d == [p3]


def test_cascade_falls_through_phases():
    t1, t2, t3 = track(15, 0, 1), track(25, 4, 2), track(20, -3, 3)
    m, p3 = mix(det3(15, 0.2)), det3(25.3, 4)
    # The third track only shows up in the camera.
    p2 = det2(det3(20, -3.2))
    res = sync([t1, t2, t3], PreprocessOutput("sync", mix=[m], pure3d=[p3], pure2d=[p2]))
    assert ids(res.mp1) == [(1, m)]
    assert ids(res.mp2) == [(2, p3)]
    assert ids(res.mp3) == [(3, p2)]
    assert res.unmatched_tracks == []


def test_lidar_dropout_uses_camera_phase():
    t = track(20, 1, 1)
    p2 = det2(det3(20, 1.1))
    res = sync([t], PreprocessOutput("sync", pure2d=[p2]))
    assert ids(res.mp3) == [(1, p2)] and res.mp1 == [] and res.mp2 == []


def test_gates_and_classes():
    far = det3(60, 0)
    ped = mix(det3(15, 0, cls="pedestrian"))
    res = sync([track(15, 0, 1)], PreprocessOutput("sync", mix=[ped], pure3d=[far]))
    assert res.pairs() == [] and res.unmatched_mix == [ped] and res.unmatched_pure3d == [far]
    assert [t.track_id for t in res.unmatched_tracks] == [1]


def test_disabled_phases_leave_detections_unmatched():
    t = track(15, 0, 1)
    m = mix(det3(15, 0))
    p2 = det2(det3(15, 0))
    res = sync([t], PreprocessOutput("sync", mix=[m], pure2d=[p2]), phases=("p2da",))
    assert res.unmatched_mix == [m] and ids(res.mp3) == [(1, p2)]


def test_single_stage_mode():
    t1, t2 = track(15, 0, 1), track(25, 0, 2)
    m, p3, p2 = mix(det3(25, 0)), det3(15, 0), det2(det3(40, 0))
    res = sync([t1, t2], PreprocessOutput("sync", mix=[m], pure3d=[p3], pure2d=[p2]), cascade=False)
    assert ids(res.mp1) == [(2, m)] and ids(res.mp2) == [(1, p3)] and res.mp3 == []
    assert res.unmatched_pure2d == [p2]


def test_image_space_ignores_pure_lidar():
    t = track(15, 0, 1)
    m, p3 = mix(det3(15, 0)), det3(30, 0)
    res = sync([t], PreprocessOutput("sync", mix=[m], pure3d=[p3]), space="image")
    assert ids(res.mp1) == [(1, m)] and res.mp2 == [] and res.unmatched_pure3d == []


def test_async_matches_on_image_iou():
    t1, t2 = track(15, 0, 1), track(30, 5, 2)
    d = det2(det3(15.2, 0))
    res = associate_async([t1, t2], [d, Detection2D(Box2D(0, 0, 20, 20), 0.5, "car", "front")], CAMS, CFG.for_class)
    assert ids(res.mpa) == [(1, d)]
    assert [t.track_id for t in res.unmatched_tracks] == [2] and len(res.unmatched_single2d) == 1
    empty = associate_async([t1], [], CAMS, CFG.for_class)
    assert empty.mpa == [] and len(empty.unmatched_tracks) == 1


def test_async_unknown_camera_never_matches():
    d = Detection2D(project_box(det3(15, 0).box, FRONT), 0.9, "car", "nowhere")
    res = associate_async([track(15, 0, 1)], [d], CAMS, CFG.for_class)
    assert res.mpa == []


@pytest.mark.parametrize("seed", range(20))
def test_conservation(seed):
    rng = np.random.default_rng(seed)
    classes = ["car", "pedestrian"]
    tracks = [track(rng.uniform(8, 40), rng.uniform(-8, 8), i, classes[i % 2]) for i in range(rng.integers(0, 8))]
    d3 = [det3(rng.uniform(8, 40), rng.uniform(-8, 8), cls=classes[i % 2]) for i in range(rng.integers(0, 8))]
    d3 = [d for d in d3 if project_box(d.box, FRONT) is not None]
    n_mix = len(d3) // 2
    pre = PreprocessOutput(
        "sync",
        mix=[mix(d) for d in d3[:n_mix]],
        pure3d=d3[n_mix:],
        pure2d=[det2(det3(rng.uniform(8, 40), rng.uniform(-6, 6))) for _ in range(rng.integers(0, 3))],
    )
    pre.pure2d = [d for d in pre.pure2d if d.box is not None]
    res = sync(tracks, pre)
    matched = [t.track_id for t, _ in res.pairs()]
    assert len(matched) == len(set(matched))
    assert sorted(matched + [t.track_id for t in res.unmatched_tracks]) == sorted(t.track_id for t in tracks)
    assert len(res.mp1) + len(res.unmatched_mix) == len(pre.mix)
    assert len(res.mp2) + len(res.unmatched_pure3d) == len(pre.pure3d)
    assert len(res.mp3) + len(res.unmatched_pure2d) == len(pre.pure2d)
    assert all(t.cls == d.cls for t, d in res.pairs())
