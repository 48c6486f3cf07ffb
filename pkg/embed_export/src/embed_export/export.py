"""Transformer embedding export.

Each corpus sample is run through a pretrained encoder in eval mode and
its last hidden layer becomes the sample's embedding matrix: the first
row is the model's leading special position, the last row its trailing
special position, and every core token in between is pooled to the hidden
state of its first subword. Repeated runs over the same inputs produce
byte-identical files.

Expects an encoder-style model whose tokenizer wraps inputs in leading
and trailing special tokens; the subword lookup relies on a fast
tokenizer's character offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .corpus_io import CorpusSample, read_corpus
from .errors import AlignmentError, ExportError
from .writer import write_embedding_file

OPEN_MARKER = "[e]"
CLOSE_MARKER = "[/e]"
MARKER_INIT_SEED = 0

POOLING_MODES = ("first-subword",)


@dataclass(frozen=True)
class ExportSpec:
    model: str  # model identifier or local directory
    corpus: str  # corpus JSONL path
    out: str  # output embedding file path
    pooling: str = "first-subword"
    add_markers: bool = False  # register [e] / [/e] as vocabulary tokens
    batch_size: int = 8

    def __post_init__(self) -> None:
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def _load_model(spec: ExportSpec):
    tokenizer = AutoTokenizer.from_pretrained(spec.model, use_fast=True)
    if not tokenizer.is_fast:
        raise ExportError(f"model {spec.model!r} has no fast tokenizer; offsets are required")
    model = AutoModel.from_pretrained(spec.model)
    if spec.add_markers:
        added = tokenizer.add_tokens([OPEN_MARKER, CLOSE_MARKER])
        if added:
            # fresh marker vectors; seeded so repeated exports agree
            torch.manual_seed(MARKER_INIT_SEED)
            model.resize_token_embeddings(len(tokenizer))
    model.eval()
    return tokenizer, model


def _first_subword_rows(
    sample: CorpusSample, offsets: np.ndarray, hidden: np.ndarray
) -> list[np.ndarray]:
    """One row per core token: the hidden state of its first subword."""
    rows = []
    for k, (b, e) in enumerate(sample.tokens):
        row = None
        for j in range(offsets.shape[0]):
            s, t = int(offsets[j, 0]), int(offsets[j, 1])
            if s < t and b <= s and t <= e:
                row = hidden[j]
                break
        if row is None:
            raise AlignmentError(
                f"sample {sample.id!r}: token {k} ({sample.text[b:e]!r} at {b}..{e}) "
                f"has no aligned subword"
            )
        rows.append(row)
    return rows


def export(spec: ExportSpec) -> dict[str, int]:
    """Embed a corpus and write the embedding file.

    Returns {"samples": ..., "dim": ...} for reporting.
    """
    samples = read_corpus(spec.corpus)
    tokenizer, model = _load_model(spec)
    max_positions = getattr(model.config, "max_position_embeddings", None)

    matrices: dict[str, np.ndarray] = {}
    with torch.inference_mode():
        for lo in range(0, len(samples), spec.batch_size):
            batch = samples[lo:lo + spec.batch_size]
            encoded = tokenizer(
                [s.text for s in batch],
                return_offsets_mapping=True,
                return_tensors="pt",
                padding=True,
            )
            lengths = encoded["attention_mask"].sum(dim=1).tolist()
            if max_positions is not None:
                for s, n in zip(batch, lengths):
                    if n > max_positions:
                        raise ExportError(
                            f"sample {s.id!r}: {n} subwords exceed the model's "
                            f"{max_positions} positions"
                        )
            offsets = encoded.pop("offset_mapping").numpy()
            hidden = model(**encoded).last_hidden_state.numpy().astype(np.float32)
            for i, sample in enumerate(batch):
                n = int(lengths[i])
                token_rows = _first_subword_rows(sample, offsets[i, :n], hidden[i, :n])
                matrices[sample.id] = np.stack(
                    [hidden[i, 0], *token_rows, hidden[i, n - 1]]
                )
    write_embedding_file(spec.out, matrices)
    return {"samples": len(matrices), "dim": int(next(iter(matrices.values())).shape[1])}
