"""Evaluation metrics and stratified cross-validation splits.

``ovr_accuracy`` is the averaged one-vs-rest accuracy

    (1 / l) * sum over classes i of (TP_i + TN_i) / N

which differs from plain micro accuracy (trace / N) for l > 2; the two
coincide for every matrix when l = 2 and for perfect classifiers at any
l.  Per-class precision, recall and F1 define 0/0 as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError


class LengthMismatch(PipelineError):
    """Prediction and label lists differ in length."""


class LabelOutOfRange(PipelineError):
    """A prediction or label falls outside 1..l."""


class TooFewSamples(PipelineError):
    """Fewer samples than folds."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p] = samples of true class t+1 predicted as class p+1."""

    counts: np.ndarray  # (l, l) int64
    l: int

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def per_class(self):
        """(tp, fp, fn, tn) arrays; tp + fp + fn + tn = N for every class."""
        tp = np.diag(self.counts).astype(np.int64)
        fn = self.counts.sum(axis=1) - tp
        fp = self.counts.sum(axis=0) - tp
        tn = self.n - tp - fn - fp
        return tp, fp, fn, tn


def confusion(predictions, labels, l: int) -> ConfusionMatrix:
    """Tally a confusion matrix from parallel prediction/label lists."""
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    counts = np.zeros((l, l), dtype=np.int64)
    for pred, true in zip(predictions, labels):
        if not (1 <= true <= l) or not (1 <= pred <= l):
            raise LabelOutOfRange(f"(pred={pred}, true={true}) outside 1..{l}")
        counts[true - 1, pred - 1] += 1
    return ConfusionMatrix(counts=counts, l=l)


def ovr_accuracy(cm: ConfusionMatrix) -> float:
    """Averaged one-vs-rest accuracy (see module docstring)."""
    tp, _fp, _fn, tn = cm.per_class()
    n = cm.n
    if n == 0:
        raise ValueError("empty confusion matrix")
    return float(np.mean((tp + tn) / n))


def micro_accuracy(cm: ConfusionMatrix) -> float:
    """Plain accuracy: trace / N."""
    n = cm.n
    if n == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / n)


def standard_metrics(cm: ConfusionMatrix) -> dict:
    """Micro accuracy plus per-class precision/recall/F1 and macro F1."""
    tp, fp, fn, _tn = cm.per_class()
    precision = np.zeros(cm.l)
    recall = np.zeros(cm.l)
    f1 = np.zeros(cm.l)
    for i in range(cm.l):
        denom = tp[i] + fp[i]
        precision[i] = tp[i] / denom if denom else 0.0
        denom = tp[i] + fn[i]
        recall[i] = tp[i] / denom if denom else 0.0
        denom = precision[i] + recall[i]
        f1[i] = 2 * precision[i] * recall[i] / denom if denom else 0.0
    return {
        "micro_accuracy": micro_accuracy(cm),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_f1": float(f1.mean()),
    }


def kfold_split(ids, k: int = 10, seed: int = 0, stratify_by: dict | None = None):
    """Deterministic stratified k-fold split.

    Returns k (train_ids, test_ids) pairs of sorted lists.  Within each
    class, members are shuffled by the seed and dealt cyclically, so
    per-class fold sizes differ by at most one; a running offset keeps
    total fold sizes balanced too.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ids) < k:
        raise TooFewSamples(f"{len(ids)} samples cannot fill {k} folds")

    labels = stratify_by if stratify_by is not None else {sid: 1 for sid in ids}
    missing = [sid for sid in ids if sid not in labels]
    if missing:
        raise ValueError(f"no stratification label for: {missing[:5]}")

    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for label in sorted({labels[sid] for sid in ids}):
        members = sorted(sid for sid in ids if labels[sid] == label)
        perm = rng.permutation(len(members))
        for pos, idx in enumerate(perm):
            folds[(offset + pos) % k].append(members[idx])
        offset = (offset + len(members)) % k

    all_ids = set(ids)
    return [
        (sorted(all_ids - set(fold)), sorted(fold))
        for fold in folds
    ]
