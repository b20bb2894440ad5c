"""Window-level sensitivity, false predictions per hour, ROC and AUC."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric needs samples of a class that is absent."""


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # +inf first, then distinct scores descending
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def _scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    return scores, labels


def sensitivity(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of preictal windows scored at or above ``threshold``."""
    scores, labels = _scores_labels(scores, labels)
    pos = scores[labels == 1]
    if pos.size == 0:
        raise UndefinedMetricError("sensitivity needs at least one preictal sample")
    return float(np.count_nonzero(pos >= threshold) / pos.size)


def fpr_per_hour(interictal_scores, threshold: float = 0.5, window_s: float = 20.0) -> float:
    """False predictions per hour of non-overlapping interictal windows."""
    s = np.asarray(interictal_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise UndefinedMetricError("false prediction rate needs interictal samples")
    hours = s.size * window_s / 3600.0
    return float(np.count_nonzero(s >= threshold) / hours)


def roc_and_auc(scores, labels) -> RocCurve:
    """ROC from sweeping the threshold over all distinct scores; trapezoidal AUC.

    Equal scores form a single threshold step, so ties contribute 1/2.
    """
    scores, labels = _scores_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both preictal and interictal samples")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last_of_group]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(fpr, tpr, thresholds, auc)


def auc_score(scores, labels) -> float:
    return roc_and_auc(scores, labels).auc


@dataclass
class EvalReport:
    sensitivity: float
    fpr_per_hour: float
    auc: float
    n_preictal: int
    n_interictal: int
    threshold: float

    def as_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "fpr_per_h": self.fpr_per_hour,
            "auc": self.auc,
            "n_preictal": self.n_preictal,
            "n_interictal": self.n_interictal,
            "threshold": self.threshold,
        }


def evaluate(scores, labels, threshold: float = 0.5, window_s: float = 20.0) -> EvalReport:
    scores, labels = _scores_labels(scores, labels)
    return EvalReport(
        sensitivity=sensitivity(scores, labels, threshold),
        fpr_per_hour=fpr_per_hour(scores[labels == 0], threshold, window_s),
        auc=roc_and_auc(scores, labels).auc,
        n_preictal=int(labels.sum()),
        n_interictal=int((labels == 0).sum()),
        threshold=threshold,
    )


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for f, t, th in curve.points:
            w.writerow([repr(th) if math.isfinite(th) else "inf", repr(f), repr(t)])


def write_roc_svg(curve: RocCurve, path, size: int = 360, title: str = "") -> None:
    """Plain SVG plot of the curve with the chance diagonal dashed."""
    pad = 40
    span = size - 2 * pad

    def xy(f, t):
        return f"{pad + f * span:.2f},{pad + (1 - t) * span:.2f}"

    poly = " ".join(xy(f, t) for f, t in zip(curve.fpr, curve.tpr))
    label = f"{title} AUC = {curve.auc:.3f}".strip()
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">
<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>
<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="gray" stroke-dasharray="6,4"/>
<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>
<text x="{pad}" y="{pad - 12}" font-size="13">{label}</text>
<text x="{size / 2:.0f}" y="{size - 8}" font-size="12" text-anchor="middle">False positive rate</text>
<text x="12" y="{size / 2:.0f}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {size / 2:.0f})">True positive rate</text>
</svg>
"""
    Path(path).write_text(svg)
