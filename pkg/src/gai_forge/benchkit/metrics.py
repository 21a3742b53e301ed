"""Binary fake-vs-real metrics over multi-class predictions."""

from __future__ import annotations

import json
import math
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import LabeledSet
from ..diffnet import Classifier, predict_proba
from ..numcore import ContractError

log = logging.getLogger(__name__)

METRICS = ("acc_minor", "tpr_at_fpr", "acc_all", "auc")


@dataclass
class MetricsReport:
    """Metrics in percent. For an aggregate, ``mean``/``std`` are over
    ``per_seed``; a single-seed report has one entry and std 0."""

    mean: dict[str, float]
    std: dict[str, float]
    per_seed: list[dict[str, float]]
    fpr_point: float
    class_counts: dict[str, int] = field(default_factory=dict)
    unreliable: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def csv_row(self) -> dict[str, float]:
        row = {}
        for m in METRICS:
            row[m] = self.mean[m]
            row[m + "_std"] = self.std[m]
        row["fpr_point"] = self.fpr_point
        return row


def fake_scores(probs: np.ndarray) -> np.ndarray:
    """Probability mass on every forgery class (all classes but 0)."""
    return probs[:, 1:].sum(axis=1)


def roc_points(scores_pos: np.ndarray, scores_neg: np.ndarray):
    """(fpr, tpr, thresholds), thresholds descending from +inf; a sample is
    positive when score >= threshold."""
    thr = np.concatenate([[np.inf], np.unique(np.concatenate([scores_pos, scores_neg]))[::-1]])
    pos = np.sort(scores_pos)
    neg = np.sort(scores_neg)
    tp = len(pos) - np.searchsorted(pos, thr, side="left")
    fp = len(neg) - np.searchsorted(neg, thr, side="left")
    return fp / max(len(neg), 1), tp / max(len(pos), 1), thr


def auc_trapezoid(scores_pos, scores_neg) -> float:
    fpr, tpr, _ = roc_points(np.asarray(scores_pos, float), np.asarray(scores_neg, float))
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_pairwise(scores_pos, scores_neg) -> float:
    """Brute-force O(n*m) AUC: P(pos > neg) + 0.5 P(pos == neg)."""
    pos = np.asarray(scores_pos, float)[:, None]
    neg = np.asarray(scores_neg, float)[None, :]
    wins = np.sum(pos > neg) + 0.5 * np.sum(pos == neg)
    return float(wins / (pos.size * neg.size))


def tpr_at_fpr(scores_pos, scores_neg, fpr_point: float) -> float:
    """TPR at the lowest threshold whose FPR does not exceed ``fpr_point``."""
    fpr, tpr, _ = roc_points(np.asarray(scores_pos, float), np.asarray(scores_neg, float))
    ok = np.flatnonzero(fpr <= fpr_point)
    return float(tpr[ok[-1]])


def evaluate_scores(scores: np.ndarray, labels: np.ndarray, minority_label: int, fpr_point: float = 0.01,
                    threshold: float = 0.5) -> MetricsReport:
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    if not 0.0 <= fpr_point <= 1.0:
        raise ContractError(f"fpr point {fpr_point} outside [0, 1]")
    real = scores[labels == 0]
    fake = scores[labels != 0]
    minor = scores[labels == minority_label]
    if len(real) == 0 or len(minor) == 0:
        raise ContractError("test set needs both real and minority samples")
    unreliable = len(real) * fpr_point < 1.0
    if unreliable:
        log.warning("only %d real test samples for an FPR point of %g; TPR@FPR is unreliable", len(real), fpr_point)
    pred_fake = scores >= threshold
    values = {
        "acc_minor": 100.0 * float(np.mean(minor >= threshold)),
        "tpr_at_fpr": 100.0 * tpr_at_fpr(minor, real, fpr_point),
        "acc_all": 100.0 * float(np.mean(pred_fake == (labels != 0))),
        "auc": 100.0 * auc_trapezoid(fake, real),
    }
    counts = {str(int(c)): int(n) for c, n in zip(*np.unique(labels, return_counts=True))}
    return MetricsReport(dict(values), {k: 0.0 for k in values}, [values], fpr_point, counts, bool(unreliable))


def evaluate(model: Classifier, test: LabeledSet, fpr_point: float = 0.01, minority_label: int | None = None) -> MetricsReport:
    minority = model.num_classes - 1 if minority_label is None else minority_label
    present = np.unique(test.labels)
    if present.max() >= model.num_classes:
        raise ContractError(f"test labels up to {present.max()} but the model has {model.num_classes} classes")
    return evaluate_scores(fake_scores(predict_proba(model, test.images)), test.labels, minority, fpr_point)


def aggregate_runs(reports: list[MetricsReport]) -> MetricsReport:
    """Mean and population standard deviation over per-seed reports."""
    if not reports:
        raise ContractError("no reports to aggregate")
    points = {r.fpr_point for r in reports}
    if len(points) != 1:
        raise ContractError(f"mismatched FPR operating points {sorted(points)}")
    per_seed = [row for r in reports for row in r.per_seed]
    # fsum is exactly rounded, so the aggregate does not depend on report order
    n = len(per_seed)
    mean = {m: math.fsum(row[m] for row in per_seed) / n for m in METRICS}
    std = {m: math.sqrt(math.fsum((row[m] - mean[m]) ** 2 for row in per_seed) / n) for m in METRICS}
    return MetricsReport(mean, std, per_seed, reports[0].fpr_point, dict(reports[0].class_counts),
                         any(r.unreliable for r in reports))
