"""Evaluation metrics for multi-label side-effect prediction.

All rates are returned as percentages. Ranking metrics (ROC-AUC, AUPR) are
computed over the flattened ``(drug, side effect)`` pairs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata


class UndefinedMetric(ValueError):
    """A metric is undefined for the given labels (e.g. only one class present)."""


def _mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def binary_accuracy(scores, targets, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets)
    if scores.shape != targets.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {targets.shape}")
    if scores.size == 0:
        raise ValueError("empty input")
    return 100.0 * float(np.mean((scores > threshold) == (targets == 1)))


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel() == 1
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("ROC-AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)  # average ranks for ties
    wins = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * wins / (n_pos * n_neg)


def precision_recall_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at each distinct score threshold, highest first."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel() == 1
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetric("AUPR needs at least one positive label")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of tied scores
    cut = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[cut]
    predicted = cut + 1
    return tp / predicted, tp / n_pos


def aupr(scores, labels) -> float:
    """Area under the precision-recall curve.

    Operating points are swept from the highest score down and joined by
    straight segments, starting from ``(recall 0, precision 1)``.
    """
    precision, recall = precision_recall_points(scores, labels)
    r = np.r_[0.0, recall]
    p = np.r_[1.0, precision]
    return 100.0 * float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


@dataclass
class ConfusionReport:
    ppv: float
    ppv_std: float
    npv: float
    npv_std: float
    sensitivity: float
    sensitivity_std: float
    specificity: float
    specificity_std: float
    tp: int
    fp: int
    tn: int
    fn: int
    excluded_drug_count: int = 0
    excluded: dict = field(default_factory=dict)


def confusion_metrics(scores, targets, threshold: float = 0.5) -> ConfusionReport:
    """Per-drug PPV, NPV, sensitivity and specificity, averaged over drugs.

    A drug whose rate has a zero denominator is left out of that average;
    the number of drugs left out of PPV (no predicted positives) is
    reported as ``excluded_drug_count``.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    targets = np.atleast_2d(np.asarray(targets)) == 1
    if scores.shape != targets.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {targets.shape}")
    pred = scores > threshold
    tp = (pred & targets).sum(axis=1)
    fp = (pred & ~targets).sum(axis=1)
    tn = (~pred & ~targets).sum(axis=1)
    fn = (~pred & targets).sum(axis=1)

    def rate(num, den):
        ok = den > 0
        return 100.0 * num[ok] / den[ok], int((~ok).sum())

    ppv, ppv_x = rate(tp, tp + fp)
    npv, npv_x = rate(tn, tn + fn)
    sens, sens_x = rate(tp, tp + fn)
    spec, spec_x = rate(tn, tn + fp)
    return ConfusionReport(
        *_mean_std(ppv),
        *_mean_std(npv),
        *_mean_std(sens),
        *_mean_std(spec),
        tp=int(tp.sum()),
        fp=int(fp.sum()),
        tn=int(tn.sum()),
        fn=int(fn.sum()),
        excluded_drug_count=ppv_x,
        excluded={"ppv": ppv_x, "npv": npv_x, "sensitivity": sens_x, "specificity": spec_x},
    )


def dse_frequency_analysis(scores, targets, vocab_counts, top_n: int = 10, threshold: float = 0.5) -> dict:
    """Detection ratio (true positives / occurrences) per side effect.

    Side effects are ranked by ``vocab_counts`` (dataset-wide occurrences);
    occurrences and true positives are counted on the evaluated targets.
    Side effects that never occur in ``targets`` have no ratio and are
    skipped. Ties in frequency are broken by vocabulary position.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    targets = np.atleast_2d(np.asarray(targets)) == 1
    counts = np.asarray(vocab_counts)
    if counts.shape != (targets.shape[1],):
        raise ValueError("vocab_counts must have one entry per class")
    occ = targets.sum(axis=0)
    tp = ((scores > threshold) & targets).sum(axis=0)
    present = np.flatnonzero(occ > 0)
    ratio = np.full(targets.shape[1], np.nan)
    ratio[present] = 100.0 * tp[present] / occ[present]

    by_freq = present[np.lexsort((present, -counts[present]))]
    most = by_freq[:top_n]
    least = by_freq[::-1][:top_n]
    out = {}
    for name, idx in (("most_frequent", most), ("least_frequent", least), ("overall", present)):
        mean, std = _mean_std(ratio[idx])
        out[name] = {"mean": mean, "std": std, "indices": idx.tolist() if name != "overall" else None}
    out["overall"].pop("indices")
    out["overall"]["count"] = int(present.size)
    return out


@dataclass
class MetricsReport:
    binary_accuracy: float
    auc: float
    aupr: float
    confusion: ConfusionReport
    dse_frequency: dict
    num_drugs: int
    num_classes: int
    positive_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_scores(scores, targets, vocab_counts=None, threshold: float = 0.5, top_n: int = 10) -> MetricsReport:
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    targets = np.atleast_2d(np.asarray(targets))
    if vocab_counts is None:
        vocab_counts = targets.sum(axis=0)
    try:
        auc = roc_auc(scores, targets)
    except UndefinedMetric:
        auc = float("nan")
    try:
        ap = aupr(scores, targets)
    except UndefinedMetric:
        ap = float("nan")
    return MetricsReport(
        binary_accuracy=binary_accuracy(scores, targets, threshold),
        auc=auc,
        aupr=ap,
        confusion=confusion_metrics(scores, targets, threshold),
        dse_frequency=dse_frequency_analysis(scores, targets, vocab_counts, top_n, threshold),
        num_drugs=int(targets.shape[0]),
        num_classes=int(targets.shape[1]),
        positive_rate=100.0 * float(np.mean(targets == 1)),
    )


SUMMARY_FIELDS = (
    "binary_accuracy",
    "auc",
    "aupr",
    "confusion.ppv",
    "confusion.npv",
    "confusion.specificity",
    "confusion.sensitivity",
    "dse_frequency.most_frequent.mean",
    "dse_frequency.least_frequent.mean",
    "dse_frequency.overall.mean",
)


def _lookup(d: dict, dotted: str):
    for key in dotted.split("."):
        d = d[key]
    return d


def aggregate_reports(reports: list[MetricsReport]) -> dict:
    """Mean and sample standard deviation of the headline metrics across folds."""
    dicts = [r.to_dict() for r in reports]
    return {
        name: dict(zip(("mean", "std"), _mean_std([_lookup(d, name) for d in dicts])))
        for name in SUMMARY_FIELDS
    }
