import json

import numpy as np
import pytest
from reference_eval import gt_of, pred_of, random_scene, ref_amota, ref_clearmot, swap_example

from asyncmot.metrics import EvalReport, amota, clearmot, evaluate


@pytest.mark.parametrize("seed", range(20))
def test_matches_reference_evaluator(seed):
    gt, pred = random_scene(seed)
    G, S = gt_of(gt), pred_of(pred)
    cm = clearmot(S, G)
    ids, fp, fn, tp, n, _ = ref_clearmot(gt, pred)
    assert (cm.ids, cm.fp, cm.fn, cm.tp, cm.n_gt) == (ids, fp, fn, tp, n)
    assert amota(S, G)[0] == pytest.approx(ref_amota(gt, pred), abs=1e-12)


# -- examples ------------------------------------------------------------------------


def test_identity_swap():
    gt, pred = swap_example()
    cm = clearmot(pred_of(pred), gt_of(gt))
    assert cm.ids == 2 and cm.mota == pytest.approx(0.9)


def test_perfect_tracking():
    gt = {0.5 * k: [(0, "car", 10.0 + k, 0.0)] for k in range(8)}
    pred = {t: [(7, "car", x, y, 0.8)] for t, [(_, _, x, y)] in gt.items()}
    rep = evaluate(pred_of(pred), gt_of(gt))
    assert rep.amota == 1.0 and rep.mota == 1.0 and rep.ids == 0 and rep.motp == 0.0


def test_half_frames_tracked():
    gt = {0.5 * k: [(0, "car", 10.0, 0.0)] for k in range(8)}
    pred = {0.5 * k: [(1, "car", 10.0, 0.0, 1.0)] for k in range(4)}
    assert amota(pred_of(pred), gt_of(gt))[0] == pytest.approx(0.5)


def test_no_predictions():
    gt = {0.0: [(0, "car", 10.0, 0.0)]}
    rep = evaluate([], gt_of(gt))
    assert rep.amota == 0.0 and rep.fn == 1 and rep.mota == 0.0


def test_gate_and_class_respected():
    gt = {0.0: [(0, "car", 10.0, 0.0)]}
    assert clearmot(pred_of({0.0: [(1, "car", 12.1, 0.0, 0.9)]}), gt_of(gt)).tp == 0
    assert clearmot(pred_of({0.0: [(1, "car", 11.9, 0.0, 0.9)]}), gt_of(gt)).tp == 1
    assert clearmot(pred_of({0.0: [(1, "pedestrian", 10.0, 0.0, 0.9)]}), gt_of(gt)).tp == 0


def test_predictions_off_keyframes_ignored():
    gt = {0.0: [(0, "car", 10.0, 0.0)]}
    pred = {0.0: [(1, "car", 10.0, 0.0, 0.9)], 0.25: [(2, "car", 30.0, 0.0, 0.9)]}
    assert clearmot(pred_of(pred), gt_of(gt)).fp == 0


@pytest.mark.parametrize("seed", range(10))
def test_fp_non_increasing_with_cutoff(seed):
    gt, pred = random_scene(seed)
    G, S = gt_of(gt), pred_of(pred)
    fps = [clearmot(S, G, score_cutoff=c).fp for c in np.linspace(0, 1, 11)]
    assert all(a >= b for a, b in zip(fps, fps[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_track_relabel_invariance(seed):
    gt, pred = random_scene(seed)
    relabel = {t: [(1000 - i, c, x, y, s) for i, c, x, y, s in v] for t, v in pred.items()}
    a, b = evaluate(pred_of(pred), gt_of(gt)), evaluate(pred_of(relabel), gt_of(gt))
    assert a.to_dict() == b.to_dict()


def test_report_round_trip():
    gt, pred = random_scene(3)
    rep = evaluate(pred_of(pred), gt_of(gt), n_thresholds=10)
    back = EvalReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back == rep
