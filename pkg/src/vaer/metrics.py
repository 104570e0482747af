"""Evaluation: precision/recall/F1 over labeled pairs and recall@K retrieval."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import PairSet


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PrfResult:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    # Zero-denominator metrics are reported as 0.0 with the matching flag False.
    precision_defined: bool = True
    recall_defined: bool = True
    f1_defined: bool = True


def prf1(predictions: Mapping[tuple[str, str], int], truth: PairSet) -> PrfResult:
    """Precision, recall, and F1 of predicted labels against a truth pair set.

    A true positive is a pair labeled duplicate in both; false positives are
    predicted duplicates the truth marks non-duplicate; false negatives are
    truth duplicates predicted non-duplicate. Every truth pair must have a
    prediction.
    """
    missing = [(l, r) for l, r, _ in truth if (l, r) not in predictions]
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        raise KeyError(f"{len(missing)} truth pairs have no prediction; first missing: {shown}")
    tp = fp = fn = tn = 0
    for left, right, label in truth:
        pred = predictions[(left, right)]
        if pred == 1 and label == 1:
            tp += 1
        elif pred == 1 and label == 0:
            fp += 1
        elif pred == 0 and label == 1:
            fn += 1
        else:
            tn += 1
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    p_def, r_def = tp + fp > 0, tp + fn > 0
    precision = tp / (tp + fp) if p_def else 0.0
    recall = tp / (tp + fn) if r_def else 0.0
    f1_def = precision + recall > 0
    f1 = 2.0 * precision * recall / (precision + recall) if f1_def else 0.0
    return PrfResult(
        precision=precision,
        recall=recall,
        f1=f1,
        counts=counts,
        precision_defined=p_def,
        recall_defined=r_def,
        f1_defined=f1_def,
    )


def recall_at_k(
    left_neighbors: Mapping[str, Sequence[str]],
    right_neighbors: Mapping[str, Sequence[str]],
    duplicates: Iterable[tuple[str, str]],
    k: int,
) -> float:
    """Fraction of duplicate pairs where either member ranks in the other's top-K.

    ``left_neighbors`` maps a left-table id to its ranked right-table neighbor
    ids and ``right_neighbors`` the reverse direction; the two maps keep ids
    unambiguous when both tables use the same id scheme. K=0 or an empty
    duplicate set gives 0.0.
    """
    duplicates = list(duplicates)
    if k <= 0 or not duplicates:
        return 0.0
    hits = 0
    for left, right in duplicates:
        if right in left_neighbors.get(left, ())[:k] or left in right_neighbors.get(right, ())[:k]:
            hits += 1
    return hits / len(duplicates)


def format_report(results: Mapping[str, PrfResult]) -> str:
    """Human-readable metrics table, one row per named result."""
    lines = [f"{'name':<20} {'P':>8} {'R':>8} {'F1':>8} {'tp':>5} {'fp':>5} {'fn':>5} {'tn':>5}"]
    for name, res in results.items():
        flag = "" if res.precision_defined and res.recall_defined and res.f1_defined else "  (undefined->0)"
        lines.append(
            f"{name:<20} {res.precision:>8.4f} {res.recall:>8.4f} {res.f1:>8.4f} "
            f"{res.counts.tp:>5} {res.counts.fp:>5} {res.counts.fn:>5} {res.counts.tn:>5}{flag}"
        )
    return "\n".join(lines)
