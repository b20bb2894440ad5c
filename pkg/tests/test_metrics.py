import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seizurecast.metrics import (
    UndefinedMetricError,
    evaluate,
    fpr_per_hour,
    roc_and_auc,
    sensitivity,
    write_roc_csv,
    write_roc_svg,
)

from oracles import pairwise_auc


def test_sensitivity_values():
    scores = [0.9] * 8 + [0.1, 0.2]
    assert sensitivity(scores, [1] * 10) == pytest.approx(0.8)
    assert sensitivity([1.0, 1.0, 0.0], [1, 1, 0]) == 1.0
    with pytest.raises(UndefinedMetricError):
        sensitivity([0.3], [0])


def test_sensitivity_threshold_is_inclusive():
    assert sensitivity([0.5], [1]) == 1.0


def test_fpr_per_hour():
    scores = np.zeros(360)
    scores[:3] = 0.9
    assert fpr_per_hour(scores) == pytest.approx(1.5)
    assert fpr_per_hour(np.zeros(10)) == 0.0
    with pytest.raises(UndefinedMetricError):
        fpr_per_hour([])


def test_auc_hand_case():
    curve = roc_and_auc([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0])
    assert curve.auc == 0.75


def test_auc_extremes():
    assert roc_and_auc([0.8, 0.9, 0.1, 0.2], [1, 1, 0, 0]).auc == 1.0
    assert roc_and_auc([0.5] * 6, [1, 0, 1, 0, 0, 1]).auc == 0.5
    with pytest.raises(UndefinedMetricError):
        roc_and_auc([0.1, 0.2], [1, 1])


def test_curve_shape():
    curve = roc_and_auc([0.9, 0.4, 0.6, 0.1, 0.4], [1, 1, 0, 0, 0])
    pts = curve.points
    assert pts[0][:2] == (0.0, 0.0) and np.isinf(pts[0][2])
    assert pts[-1][:2] == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert np.all(np.diff(curve.thresholds) < 0)


# a coarse grid makes ties common and keeps monotone transforms strict in float64
scored = st.lists(
    st.tuples(st.integers(0, 64).map(lambda k: k / 64) | st.floats(0, 1), st.integers(0, 1)),
    min_size=2, max_size=200,
).filter(lambda xs: len({y for _, y in xs}) == 2)


@settings(max_examples=100, deadline=None)
@given(scored)
def test_auc_equals_pairwise_concordance(pairs):
    s, y = map(np.array, zip(*pairs))
    assert abs(roc_and_auc(s, y).auc - pairwise_auc(s, y)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(scored)
def test_auc_label_swap_and_monotone_invariance(pairs):
    s, y = map(np.array, zip(*pairs))
    s = np.round(s * 64) / 64
    auc = roc_and_auc(s, y).auc
    assert abs(roc_and_auc(s, 1 - y).auc - (1 - auc)) <= 1e-12
    assert abs(roc_and_auc(np.exp(3 * s) - 7, y).auc - auc) <= 1e-12
    curve = roc_and_auc(s, y)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)


def test_evaluate_matches_parts():
    rng = np.random.default_rng(0)
    s = rng.random(50)
    y = (rng.random(50) < 0.4).astype(int)
    rep = evaluate(s, y, threshold=0.3)
    assert rep.sensitivity == sensitivity(s, y, 0.3)
    assert rep.fpr_per_hour == fpr_per_hour(s[y == 0], 0.3)
    assert rep.auc == roc_and_auc(s, y).auc


def test_roc_exports(tmp_path):
    curve = roc_and_auc([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0])
    write_roc_csv(curve, tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "threshold,fpr,tpr"
    assert lines[1].startswith("inf,0.0,0.0")
    assert len(lines) == len(curve.points) + 1
    write_roc_svg(curve, tmp_path / "roc.svg")
    svg = (tmp_path / "roc.svg").read_text()
    assert "stroke-dasharray" in svg and "AUC = 0.750" in svg
