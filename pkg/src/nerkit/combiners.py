"""Set-algebra combination of prediction sets from multiple models."""

from __future__ import annotations

from .corpus import Mention, PredictionSet


def union(prediction_sets: list[PredictionSet] | list[frozenset[Mention]]) -> PredictionSet:
    """Exact set union across models."""
    if not prediction_sets:
        raise ValueError("union of zero prediction sets is undefined")
    out: PredictionSet = set()
    for preds in prediction_sets:
        out |= preds
    return out


def majority_vote(prediction_sets: list[PredictionSet] | list[frozenset[Mention]]) -> PredictionSet:
    """Keep a mention iff strictly more than half of the models emit it.

    With two models this is exactly their intersection.
    """
    if not prediction_sets:
        raise ValueError("majority vote over zero prediction sets is undefined")
    n = len(prediction_sets)
    counts: dict[Mention, int] = {}
    for preds in prediction_sets:
        for m in preds:
            counts[m] = counts.get(m, 0) + 1
    return {m for m, c in counts.items() if c > n // 2}
