"""MAP segmentation and scoring of unsupervised labels against ground truth."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MrhlpModel, Segmentation, TimeSeries, check_posterior, poly_design, rescale_time
from .exceptions import DataError, DimensionMismatch, LengthMismatch
from .logistic import priors

EXHAUSTIVE_MAX = 8


def map_segment(series: TimeSeries, model: MrhlpModel) -> Segmentation:
    """Label each sample with the regime of highest prior probability (lowest index on ties)."""
    if series.d != model.d:
        raise DimensionMismatch(f"series has d={series.d} channels but model has d={model.d}")
    tr = model.time_range if model.time_range is not None else (series.t[0], series.t[-1])
    pi = priors(poly_design(rescale_time(series.t, tr), model.hyper.u), model.weights)
    return Segmentation(np.argmax(pi, axis=1) + 1, pi)


def posterior_segment(tau) -> np.ndarray:
    tau = check_posterior(tau)
    return np.argmax(tau, axis=1) + 1


def runs(labels) -> list:
    """Maximal constant runs as ``(label, start, stop)`` with ``stop`` exclusive."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], cuts))
    stops = np.concatenate((cuts, [labels.size]))
    return [(labels[a].item(), int(a), int(b)) for a, b in zip(starts, stops)]


def is_contiguous(labels, K=None) -> bool:
    """True when no label appears in two separate runs (and at most ``K`` runs exist)."""
    r = runs(labels)
    seen = [lab for lab, _, _ in r]
    if K is not None and len(r) > K:
        return False
    return len(seen) == len(set(seen))


@dataclass(frozen=True)
class RateTable:
    fp: np.ndarray
    fn: np.ndarray
    fp_undefined: np.ndarray
    fn_undefined: np.ndarray


def fp_fn_rates(confusion) -> RateTable:
    """Per-class false positive / false negative rates in percent.

    With rows as true classes and columns as obtained classes, the FN rate
    of class k is the off-diagonal share of row k and the FP rate is the
    off-diagonal share of column k. Empty rows/columns give 0 and set the
    matching ``*_undefined`` flag.
    """
    C = np.asarray(confusion, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DataError("confusion matrix must be square")
    diag = np.diag(C)
    rows, cols = C.sum(axis=1), C.sum(axis=0)
    fn_undef, fp_undef = rows == 0, cols == 0
    fn = np.where(fn_undef, 0.0, 100.0 * (rows - diag) / np.where(fn_undef, 1.0, rows))
    fp = np.where(fp_undef, 0.0, 100.0 * (cols - diag) / np.where(fp_undef, 1.0, cols))
    return RateTable(fp, fn, fp_undef, fn_undef)


@dataclass(frozen=True)
class EvalReport:
    """Scores after the best relabeling of the predicted labels.

    ``classes`` indexes the rows/columns of ``confusion``: the true classes in
    sorted order, followed by fresh labels for predicted classes left without
    a true partner. ``permutation`` maps each predicted label to its class.
    """

    accuracy: float
    permutation: dict
    classes: tuple
    confusion: np.ndarray
    fp_rates: np.ndarray
    fn_rates: np.ndarray
    fp_undefined: np.ndarray
    fn_undefined: np.ndarray
    identity_accuracy: float
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "identity_accuracy": self.identity_accuracy,
            "n": self.n,
            "permutation": [[int(k), int(v)] for k, v in sorted(self.permutation.items())],
            "classes": [int(c) for c in self.classes],
            "confusion": self.confusion.astype(int).tolist(),
            "fp_rates": self.fp_rates.tolist(),
            "fn_rates": self.fn_rates.tolist(),
            "fp_undefined": self.fp_undefined.tolist(),
            "fn_undefined": self.fn_undefined.tolist(),
        }


def contingency(truth, pred):
    truth_classes, t_idx = np.unique(truth, return_inverse=True)
    pred_classes, p_idx = np.unique(pred, return_inverse=True)
    m = max(truth_classes.size, pred_classes.size)
    C = np.zeros((m, m), dtype=np.int64)
    np.add.at(C, (t_idx, p_idx), 1)
    return C, truth_classes, pred_classes


def best_assignment(C, exhaustive: bool | None = None) -> np.ndarray:
    """``sigma[j]`` = row matched to column ``j`` maximizing ``sum_j C[sigma[j], j]``.

    Exhaustive search over all permutations (first maximum in lexicographic
    order, so the identity wins ties) for up to 8 classes, otherwise the
    linear assignment solver; both optimize the same objective.
    """
    m = C.shape[0]
    if exhaustive is None:
        exhaustive = m <= EXHAUSTIVE_MAX
    if exhaustive:
        perms = np.array(list(itertools.permutations(range(m))), dtype=np.intp)
        scores = C[perms, np.arange(m)].sum(axis=1)
        return perms[int(np.argmax(scores))]
    rows, cols = linear_sum_assignment(C, maximize=True)
    sigma = np.empty(m, dtype=np.intp)
    sigma[cols] = rows
    return sigma


def match_labels(pred, truth, exhaustive: bool | None = None) -> EvalReport:
    """Relabel ``pred`` to minimize the error rate against ``truth`` and score it."""
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatch(f"{pred.size} predicted labels vs {truth.size} true labels")
    if pred.size == 0:
        raise LengthMismatch("no labels to score")
    C, truth_classes, pred_classes = contingency(truth, pred)
    m = C.shape[0]
    sigma = best_assignment(C, exhaustive)

    fresh = int(truth_classes.max()) + 1
    classes = list(truth_classes.tolist()) + list(range(fresh, fresh + m - truth_classes.size))
    permutation = {int(pred_classes[j]): int(classes[sigma[j]]) for j in range(pred_classes.size)}
    confusion = C[:, np.argsort(sigma)]
    rates = fp_fn_rates(confusion)
    n = int(pred.size)
    return EvalReport(
        accuracy=float(np.trace(confusion)) / n,
        permutation=permutation,
        classes=tuple(classes),
        confusion=confusion,
        fp_rates=rates.fp,
        fn_rates=rates.fn,
        fp_undefined=rates.fp_undefined,
        fn_undefined=rates.fn_undefined,
        identity_accuracy=float(np.mean(pred == truth)),
        n=n,
    )


def pooled_accuracy(reports) -> float:
    """Sample-weighted accuracy over several per-sequence evaluations."""
    reports = list(reports)
    total = sum(r.n for r in reports)
    return sum(r.accuracy * r.n for r in reports) / total
