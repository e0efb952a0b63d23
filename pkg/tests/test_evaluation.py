import json

import numpy as np
import pytest

from icpflow.evaluation import (
    CATEGORIES, EmptyMask, EvalReport, GroundTruth, accuracy, categorize, crop_range, epe,
    evaluate,
)
from icpflow.synth import SceneSpec, generate


def test_epe_examples():
    gt = np.random.default_rng(0).normal(size=(50, 3))
    assert epe(gt, gt) == 0.0
    assert epe(gt + [0.1, 0.0, 0.0], gt) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(EmptyMask):
        epe(gt, gt, np.zeros(50, dtype=bool))


def test_accuracy_examples():
    gt = np.array([[2.0, 0.0, 0.0]])
    assert accuracy(gt + [0.09, 0, 0], gt, None, 0.05, 0.05) == 100.0
    zero = np.zeros((1, 3))
    assert accuracy(zero + [0.06, 0, 0], zero, None, 0.05, 0.05) == 0.0
    assert accuracy(zero + [0.06, 0, 0], zero, None, 0.1, 0.1) == 100.0
    assert accuracy(zero, zero, None) == 100.0


def test_categorize_examples():
    flow = np.array([[0.06, 0, 0], [0.04, 0, 0], [5.0, 0, 0]])
    cat = categorize(GroundTruth(flow, np.array([True, True, False]), 0.1))
    assert [CATEGORIES[c] for c in cat] == ["dynamic_fg", "static_fg", "static_bg"]


def test_crop_range():
    pts = np.array([[10.0, 10.0, 5.0], [40.0, 0.0, 0.0], [-32.0, 32.0, 0.0]])
    assert list(crop_range(pts, 32.0)) == [True, False, True]
    assert crop_range(pts, 51.2).all()
    with pytest.raises(ValueError):
        crop_range(pts, 0.0)


def test_perfect_and_zero_prediction():
    s = generate(SceneSpec(seed=4))
    gt = GroundTruth(s.flows[0], s.fg_masks[0], 0.1)
    perfect = evaluate(s.flows[0], gt, s.scans[0])
    for c in perfect.metrics:
        assert perfect.get(c, "epe") == 0.0 and perfect.get(c, "acc_s") == 100.0
    zero = evaluate(np.zeros_like(s.flows[0]), gt, s.scans[0])
    inr = crop_range(s.scans[0], 32.0)
    dyn = inr & (categorize(gt) == 0)
    assert zero.get("dynamic_fg", "epe") == pytest.approx(
        np.linalg.norm(s.flows[0][dyn], axis=1).mean(), abs=1e-12)
    assert zero.get("static_bg", "epe") == 0.0


def test_constant_offset_epe():
    gt = np.random.default_rng(1).normal(size=(30, 3))
    c = np.array([0.3, -0.4, 0.0])
    assert epe(gt + c, gt) == pytest.approx(0.5, abs=1e-12)


def test_report_round_trips():
    s = generate(SceneSpec(seed=5))
    gt = GroundTruth(s.flows[0], s.fg_masks[0], 0.1)
    pred = s.flows[0] + np.random.default_rng(0).normal(scale=0.03, size=s.flows[0].shape)
    report = evaluate(pred, gt, s.scans[0])
    again = EvalReport.from_json(report.to_json())
    assert again.to_flat() == report.to_flat()
    assert again.to_json() == report.to_json()
    text = report.to_text()
    assert EvalReport.from_text(text).to_text() == text
    assert json.loads(report.to_json())["dynamic_fg.count"] == report.counts["dynamic_fg"]
    assert "dynamic_fg" in report.table()


def test_empty_category_omitted():
    flow = np.zeros((3, 3))
    report = evaluate(flow, GroundTruth(flow, np.zeros(3, dtype=bool), 0.1), flow)
    assert report.counts["dynamic_fg"] == 0 and "dynamic_fg" not in report.metrics
    assert "dynamic_fg.epe" not in report.to_flat()
