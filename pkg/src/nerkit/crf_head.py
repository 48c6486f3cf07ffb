"""Linear-chain CRF head over token embeddings.

A path score is start[y1] + sum_i emis[i][yi] + sum_i trans[yi][yi+1]
+ end[yn]. The likelihood normalizer runs in log space via the forward
recursion; decoding uses Viterbi with ties broken toward the lowest tag
index. All tag transitions are permitted; the model learns the scheme's
structure from data rather than having it masked in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bio
from .bio import Tagset
from .corpus import PredictionSet, Sample, restrict_to_core
from .encoder import EmbeddingMatrix
from .mathutil import logsumexp


@dataclass
class CrfParams:
    weight: np.ndarray  # (|tags|, d) emission projection
    bias: np.ndarray  # (|tags|,)
    trans: np.ndarray  # (|tags|, |tags|) trans[a, b] scores a -> b
    start: np.ndarray  # (|tags|,)
    end: np.ndarray  # (|tags|,)


@dataclass
class CrfGrads:
    emissions: np.ndarray
    trans: np.ndarray
    start: np.ndarray
    end: np.ndarray


def init_crf(rng: np.random.Generator, n_tags: int, dim: int) -> CrfParams:
    return CrfParams(
        weight=rng.standard_normal((n_tags, dim)) * 0.1,
        bias=np.zeros(n_tags),
        trans=np.zeros((n_tags, n_tags)),
        start=np.zeros(n_tags),
        end=np.zeros(n_tags),
    )


def crf_emissions(emb: EmbeddingMatrix, params: CrfParams) -> np.ndarray:
    return emb.token_rows @ params.weight.T + params.bias


def path_score(emissions: np.ndarray, tags: list[int] | np.ndarray, params: CrfParams) -> float:
    """Unnormalized log score of one tag path."""
    tags = np.asarray(tags, dtype=np.int64)
    n = emissions.shape[0]
    if n == 0:
        raise ValueError("path score over an empty sequence is undefined")
    if tags.shape[0] != n:
        raise ValueError(f"got {tags.shape[0]} tags for {n} tokens")
    score = float(params.start[tags[0]] + params.end[tags[-1]])
    score += float(emissions[np.arange(n), tags].sum())
    if n > 1:
        score += float(params.trans[tags[:-1], tags[1:]].sum())
    return score


def _forward_table(emissions: np.ndarray, params: CrfParams) -> np.ndarray:
    n = emissions.shape[0]
    alpha = np.empty_like(emissions)
    alpha[0] = params.start + emissions[0]
    for i in range(1, n):
        alpha[i] = emissions[i] + logsumexp(alpha[i - 1][:, None] + params.trans, axis=0)
    return alpha


def _backward_table(emissions: np.ndarray, params: CrfParams) -> np.ndarray:
    n = emissions.shape[0]
    beta = np.empty_like(emissions)
    beta[n - 1] = params.end
    for i in range(n - 2, -1, -1):
        beta[i] = logsumexp(params.trans + (emissions[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def crf_log_partition(emissions: np.ndarray, params: CrfParams) -> float:
    """log of the summed exp-scores over all tag paths."""
    if emissions.shape[0] == 0:
        raise ValueError("partition over an empty sequence is undefined")
    alpha = _forward_table(emissions, params)
    return float(logsumexp(alpha[-1] + params.end))


def crf_nll_grad(
    emissions: np.ndarray, gold_tags: list[int] | np.ndarray, params: CrfParams
) -> tuple[float, CrfGrads]:
    """Negative log-likelihood of the gold path and exact gradients.

    Gradients are expected counts under the model minus observed gold
    counts, from the forward-backward marginals.
    """
    gold = np.asarray(gold_tags, dtype=np.int64)
    n, k = emissions.shape
    if n == 0:
        raise ValueError("loss over an empty sequence is undefined")
    if gold.shape[0] != n:
        raise ValueError(f"got {gold.shape[0]} gold tags for {n} tokens")

    alpha = _forward_table(emissions, params)
    beta = _backward_table(emissions, params)
    logz = float(logsumexp(alpha[-1] + params.end))
    loss = logz - path_score(emissions, gold, params)

    unary = np.exp(alpha + beta - logz)  # (n, k) tag marginals
    d_emis = unary.copy()
    d_emis[np.arange(n), gold] -= 1.0

    d_trans = np.zeros((k, k))
    for i in range(n - 1):
        pair = alpha[i][:, None] + params.trans + (emissions[i + 1] + beta[i + 1])[None, :] - logz
        d_trans += np.exp(pair)
        d_trans[gold[i], gold[i + 1]] -= 1.0

    d_start = unary[0].copy()
    d_start[gold[0]] -= 1.0
    d_end = unary[-1].copy()
    d_end[gold[-1]] -= 1.0
    return loss, CrfGrads(emissions=d_emis, trans=d_trans, start=d_start, end=d_end)


def crf_viterbi(emissions: np.ndarray, params: CrfParams) -> list[int]:
    """Highest-scoring tag path; ties break toward the lowest tag index."""
    n = emissions.shape[0]
    if n == 0:
        raise ValueError("decoding an empty sequence is undefined")
    trellis = params.start + emissions[0]
    pointers = np.empty((n, emissions.shape[1]), dtype=np.int64)
    for i in range(1, n):
        scores = trellis[:, None] + params.trans
        pointers[i] = np.argmax(scores, axis=0)
        trellis = emissions[i] + np.max(scores, axis=0)
    trellis = trellis + params.end
    best = int(np.argmax(trellis))
    path = [best]
    for i in range(n - 1, 0, -1):
        best = int(pointers[i][best])
        path.append(best)
    path.reverse()
    return path


def crf_predict(
    emb: EmbeddingMatrix, params: CrfParams, sample: Sample, tagset: Tagset
) -> PredictionSet:
    """Viterbi decode into mentions, re-based to core coordinates if windowed."""
    preds = bio.decode(crf_viterbi(crf_emissions(emb, params), params), sample, tagset)
    if sample.window is not None:
        preds = restrict_to_core(preds, sample)
    return preds
