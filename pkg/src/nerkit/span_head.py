"""Span classification head: every candidate span up to a length cap is
classified over the entity types plus a none-of-the-above label.

Spans are token index pairs (b, e), inclusive on both ends. The span's
representation is the concatenation of its boundary token embeddings, so
the classifier sees 2 x d features. Predictions may overlap or nest; no
suppression is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bio import Tagset
from .corpus import Mention, PredictionSet, Sample, restrict_to_core
from .encoder import EmbeddingMatrix
from .mathutil import cross_entropy_grad

DEFAULT_MAX_SPAN_LEN = 32

# Label 0 is "no entity"; labels 1.. follow the tagset's entity type order.
NONE_LABEL = 0


@dataclass
class SpanHeadParams:
    weight: np.ndarray  # (|types| + 1, 2d)
    bias: np.ndarray  # (|types| + 1,)
    none_index: int = NONE_LABEL


def init_span_head(rng: np.random.Generator, n_types: int, dim: int) -> SpanHeadParams:
    return SpanHeadParams(
        weight=rng.standard_normal((n_types + 1, 2 * dim)) * 0.1,
        bias=np.zeros(n_types + 1),
    )


def span_count(n_tokens: int, max_span_len: int) -> int:
    """Closed form for the number of enumerated spans."""
    return sum(min(max_span_len, n_tokens - b) for b in range(n_tokens))


def enumerate_spans(n_tokens: int, max_span_len: int) -> np.ndarray:
    """All (b, e) spans with length <= max_span_len, lexicographic order."""
    if max_span_len < 1:
        raise ValueError(f"max span length must be >= 1, got {max_span_len}")
    spans = [
        (b, e)
        for b in range(n_tokens)
        for e in range(b, min(n_tokens, b + max_span_len))
    ]
    return np.array(spans, dtype=np.int64).reshape(len(spans), 2)


def span_represent(emb: EmbeddingMatrix, spans: np.ndarray) -> np.ndarray:
    """(k, 2d) features: boundary token rows concatenated per span."""
    tok = emb.token_rows
    return np.concatenate([tok[spans[:, 0]], tok[spans[:, 1]]], axis=1)


def span_logits(emb: EmbeddingMatrix, params: SpanHeadParams, spans: np.ndarray) -> np.ndarray:
    return span_represent(emb, spans) @ params.weight.T + params.bias


def span_gold_labels(
    sample: Sample, spans: np.ndarray, tagset: Tagset
) -> tuple[np.ndarray, int]:
    """Label each candidate span from the gold mentions.

    Returns (labels, unreachable) where `unreachable` counts gold mentions
    that no candidate span can represent, either because they are longer
    than the cap or do not align with token boundaries. Those mentions
    simply have no positive candidate; the loss stays well-defined.
    """
    begin_to_idx = {ts.begin: i for i, ts in enumerate(sample.tokens)}
    end_to_idx = {ts.end: i for i, ts in enumerate(sample.tokens)}
    span_to_row = {(int(b), int(e)): i for i, (b, e) in enumerate(spans)}
    labels = np.zeros(len(spans), dtype=np.int64)
    unreachable = 0
    for m in sorted(sample.gold, key=lambda m: (m.begin, m.end, m.entity_type)):
        b = begin_to_idx.get(m.begin)
        e = end_to_idx.get(m.end)
        row = span_to_row.get((b, e)) if b is not None and e is not None else None
        if row is None:
            unreachable += 1
            continue
        labels[row] = 1 + tagset.entity_types.index(m.entity_type)
    return labels, unreachable


def span_loss_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over all candidate spans; no negative sampling."""
    if logits.shape[0] == 0:
        raise ValueError("loss over zero candidate spans is undefined")
    return cross_entropy_grad(logits, labels)


def span_predict(
    emb: EmbeddingMatrix,
    params: SpanHeadParams,
    sample: Sample,
    tagset: Tagset,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> PredictionSet:
    """Emit a mention for every span whose argmax label is an entity type.

    Ties break toward the lowest label index, so an all-zero score row
    stays quiet. Overlapping and nested outputs are allowed.
    """
    n = len(sample.tokens)
    preds: PredictionSet = set()
    if n:
        spans = enumerate_spans(n, max_span_len)
        labels = np.argmax(span_logits(emb, params, spans), axis=1)
        for (b, e), label in zip(spans, labels):
            if label != NONE_LABEL:
                preds.add(
                    Mention(
                        sample.id,
                        tagset.entity_types[label - 1],
                        sample.tokens[b].begin,
                        sample.tokens[e].end,
                    )
                )
    if sample.window is not None:
        preds = restrict_to_core(preds, sample)
    return preds
