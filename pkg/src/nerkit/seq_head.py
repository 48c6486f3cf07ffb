"""Per-token tagging head: a linear layer over token embeddings with
softmax cross-entropy, decoded greedily through the BIO codec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bio
from .bio import Tagset
from .corpus import PredictionSet, Sample, restrict_to_core
from .encoder import EmbeddingMatrix
from .mathutil import cross_entropy_grad


@dataclass
class SeqHeadParams:
    weight: np.ndarray  # (|tags|, d)
    bias: np.ndarray  # (|tags|,)


def init_seq_head(rng: np.random.Generator, n_tags: int, dim: int) -> SeqHeadParams:
    return SeqHeadParams(weight=rng.standard_normal((n_tags, dim)) * 0.1, bias=np.zeros(n_tags))


def seq_logits(emb: EmbeddingMatrix, params: SeqHeadParams) -> np.ndarray:
    """(n, |tags|) scores for the token rows; boundary rows are not scored."""
    return emb.token_rows @ params.weight.T + params.bias


def seq_loss_grad(logits: np.ndarray, gold_tags: list[int] | np.ndarray) -> tuple[float, np.ndarray]:
    """Mean token-level cross-entropy and its gradient w.r.t. the logits."""
    gold = np.asarray(gold_tags, dtype=np.int64)
    if logits.shape[0] == 0:
        raise ValueError("loss over an empty token sequence is undefined")
    if gold.shape[0] != logits.shape[0]:
        raise ValueError(f"got {gold.shape[0]} gold tags for {logits.shape[0]} tokens")
    return cross_entropy_grad(logits, gold)


def seq_decode(logits: np.ndarray) -> list[int]:
    """Per-token argmax; ties break toward the lowest tag index."""
    return [int(i) for i in np.argmax(logits, axis=1)]


def seq_predict(
    emb: EmbeddingMatrix, params: SeqHeadParams, sample: Sample, tagset: Tagset
) -> PredictionSet:
    """Greedy decode into mentions, re-based to core coordinates if windowed."""
    preds = bio.decode(seq_decode(seq_logits(emb, params)), sample, tagset)
    if sample.window is not None:
        preds = restrict_to_core(preds, sample)
    return preds
