"""Strict micro-averaged precision, recall, and F1 over mention sets.

A prediction counts as correct only on exact (sample_id, entity_type,
begin, end) equality; there is no partial or overlap credit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Mention, PredictionSet


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "Metrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def score(gold: PredictionSet | frozenset[Mention], pred: PredictionSet | frozenset[Mention]) -> Metrics:
    """Micro scores aggregated over all samples and types at once."""
    gold = set(gold)
    pred = set(pred)
    tp = len(gold & pred)
    return Metrics.from_counts(tp=tp, fp=len(pred) - tp, fn=len(gold) - tp)


def score_per_type(
    gold: PredictionSet | frozenset[Mention], pred: PredictionSet | frozenset[Mention]
) -> dict[str, Metrics]:
    """Per-entity-type breakdown over the union of types seen on either side."""
    types = sorted({m.entity_type for m in gold} | {m.entity_type for m in pred})
    return {
        t: score(
            {m for m in gold if m.entity_type == t},
            {m for m in pred if m.entity_type == t},
        )
        for t in types
    }


def format_report(metrics: Metrics) -> str:
    return (
        f"P={metrics.precision:.4f} R={metrics.recall:.4f} F1={metrics.f1:.4f} "
        f"TP={metrics.tp} FP={metrics.fp} FN={metrics.fn}"
    )
