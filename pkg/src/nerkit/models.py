"""Model bundles: an encoder plus one head, wired for the training loop.

Each bundle owns its parameters, computes joint loss gradients through
the encoder, predicts mention sets, and evaluates on a validation split.
Checkpoints store the parameter arrays next to a small JSON header naming
the model kind, the entity types, and the encoder geometry.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from . import bio, meta, scorer, seq_head, span_head
from .bio import Tagset
from .corpus import Mention, PredictionSet, Sample, restrict_to_core
from .crf_head import (
    CrfParams,
    crf_emissions,
    crf_nll_grad,
    crf_predict,
    init_crf,
)
from .encoder import (
    DEFAULT_DIM,
    DEFAULT_HASH_SIZE,
    DEFAULT_WIDTH,
    EmbeddingMatrix,
    SparseRows,
    ToyEncoderParams,
    encode_toy,
    encode_toy_backward,
    init_toy_encoder,
)
from .errors import FormatError
from .meta import MetaExample, MetaParams, init_meta_head, meta_accuracy, meta_loss_grad
from .seq_head import SeqHeadParams, init_seq_head, seq_loss_grad, seq_predict
from .span_head import (
    DEFAULT_MAX_SPAN_LEN,
    SpanHeadParams,
    enumerate_spans,
    init_span_head,
    span_gold_labels,
    span_loss_grad,
    span_predict,
    span_represent,
)

CHECKPOINT_HEADER_KEY = "header_json"


class _EntityModelBase:
    """Common plumbing for the three mention-producing models."""

    kind = ""

    def __init__(self, tagset: Tagset, encoder: ToyEncoderParams):
        self.tagset = tagset
        self.encoder = encoder
        self.dropped_overlaps = 0
        self.unreachable_gold = 0
        self._gold_cache: dict[str, object] = {}

    def encode(self, sample: Sample) -> EmbeddingMatrix:
        return encode_toy(sample, self.encoder)

    def parameters(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def predict(self, sample: Sample, emb: EmbeddingMatrix | None = None) -> PredictionSet:
        raise NotImplementedError

    def loss_and_grads(self, sample: Sample) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
        raise NotImplementedError

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.parameters().items():
            v[...] = snap[k]

    def evaluate(self, items: Sequence[Sample]) -> tuple[float, float, float, frozenset[Mention]]:
        gold: PredictionSet = set()
        preds: PredictionSet = set()
        for sample in items:
            gold |= restrict_to_core(sample.gold, sample) if sample.window else set(sample.gold)
            preds |= self.predict(sample)
        m = scorer.score(gold, preds)
        return m.precision, m.recall, m.f1, frozenset(preds)

    def _encoder_grads(
        self, sample: Sample, grad_token_rows: np.ndarray, n_tokens: int
    ) -> dict[str, np.ndarray | SparseRows]:
        grad_rows = np.zeros((n_tokens + 2, self.encoder.dim))
        grad_rows[1:-1] = grad_token_rows
        return encode_toy_backward(sample, self.encoder, grad_rows)

    def _tags_for(self, sample: Sample) -> list[int]:
        cached = self._gold_cache.get(sample.id)
        if cached is None:
            kept, dropped = bio.resolve_overlaps(sample.gold)
            self.dropped_overlaps += dropped
            resolved = Sample(
                id=sample.id, text=sample.text, tokens=sample.tokens,
                gold=frozenset(kept), window=sample.window,
            )
            cached = bio.encode(resolved, self.tagset)
            self._gold_cache[sample.id] = cached
        return cached  # type: ignore[return-value]


class SeqModel(_EntityModelBase):
    kind = "seq"

    def __init__(self, tagset: Tagset, encoder: ToyEncoderParams, head: SeqHeadParams):
        super().__init__(tagset, encoder)
        self.head = head

    @classmethod
    def build(
        cls,
        tagset: Tagset,
        dim: int = DEFAULT_DIM,
        hash_size: int = DEFAULT_HASH_SIZE,
        width: int = DEFAULT_WIDTH,
        seed: int = 0,
    ) -> "SeqModel":
        rng = np.random.default_rng(seed)
        return cls(tagset, init_toy_encoder(rng, dim, hash_size, width), init_seq_head(rng, len(tagset), dim))

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "emb_table": self.encoder.table,
            "emb_begin": self.encoder.begin_vec,
            "emb_end": self.encoder.end_vec,
            "head_w": self.head.weight,
            "head_b": self.head.bias,
        }

    def loss_and_grads(self, sample: Sample) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
        emb = self.encode(sample)
        logits = seq_head.seq_logits(emb, self.head)
        loss, d_logits = seq_loss_grad(logits, self._tags_for(sample))
        grads: dict[str, np.ndarray | SparseRows] = {
            "head_w": d_logits.T @ emb.token_rows,
            "head_b": d_logits.sum(axis=0),
        }
        grads.update(self._encoder_grads(sample, d_logits @ self.head.weight, len(sample.tokens)))
        return loss, grads

    def predict(self, sample: Sample, emb: EmbeddingMatrix | None = None) -> PredictionSet:
        return seq_predict(emb if emb is not None else self.encode(sample), self.head, sample, self.tagset)


class CrfModel(_EntityModelBase):
    kind = "crf"

    def __init__(self, tagset: Tagset, encoder: ToyEncoderParams, head: CrfParams):
        super().__init__(tagset, encoder)
        self.head = head

    @classmethod
    def build(
        cls,
        tagset: Tagset,
        dim: int = DEFAULT_DIM,
        hash_size: int = DEFAULT_HASH_SIZE,
        width: int = DEFAULT_WIDTH,
        seed: int = 0,
    ) -> "CrfModel":
        rng = np.random.default_rng(seed)
        return cls(tagset, init_toy_encoder(rng, dim, hash_size, width), init_crf(rng, len(tagset), dim))

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "emb_table": self.encoder.table,
            "emb_begin": self.encoder.begin_vec,
            "emb_end": self.encoder.end_vec,
            "head_w": self.head.weight,
            "head_b": self.head.bias,
            "trans": self.head.trans,
            "start": self.head.start,
            "end": self.head.end,
        }

    def loss_and_grads(self, sample: Sample) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
        emb = self.encode(sample)
        emissions = crf_emissions(emb, self.head)
        loss, cg = crf_nll_grad(emissions, self._tags_for(sample), self.head)
        grads: dict[str, np.ndarray | SparseRows] = {
            "head_w": cg.emissions.T @ emb.token_rows,
            "head_b": cg.emissions.sum(axis=0),
            "trans": cg.trans,
            "start": cg.start,
            "end": cg.end,
        }
        grads.update(self._encoder_grads(sample, cg.emissions @ self.head.weight, len(sample.tokens)))
        return loss, grads

    def predict(self, sample: Sample, emb: EmbeddingMatrix | None = None) -> PredictionSet:
        return crf_predict(emb if emb is not None else self.encode(sample), self.head, sample, self.tagset)


class SpanModel(_EntityModelBase):
    kind = "span"

    def __init__(
        self,
        tagset: Tagset,
        encoder: ToyEncoderParams,
        head: SpanHeadParams,
        max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    ):
        super().__init__(tagset, encoder)
        self.head = head
        self.max_span_len = max_span_len

    @classmethod
    def build(
        cls,
        tagset: Tagset,
        dim: int = DEFAULT_DIM,
        hash_size: int = DEFAULT_HASH_SIZE,
        width: int = DEFAULT_WIDTH,
        max_span_len: int = DEFAULT_MAX_SPAN_LEN,
        seed: int = 0,
    ) -> "SpanModel":
        rng = np.random.default_rng(seed)
        return cls(
            tagset,
            init_toy_encoder(rng, dim, hash_size, width),
            init_span_head(rng, len(tagset.entity_types), dim),
            max_span_len,
        )

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "emb_table": self.encoder.table,
            "emb_begin": self.encoder.begin_vec,
            "emb_end": self.encoder.end_vec,
            "head_w": self.head.weight,
            "head_b": self.head.bias,
        }

    def _labels_for(self, sample: Sample, spans: np.ndarray) -> np.ndarray:
        cached = self._gold_cache.get(sample.id)
        if cached is None:
            labels, unreachable = span_gold_labels(sample, spans, self.tagset)
            self.unreachable_gold += unreachable
            cached = labels
            self._gold_cache[sample.id] = cached
        return cached  # type: ignore[return-value]

    def loss_and_grads(self, sample: Sample) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
        n = len(sample.tokens)
        if n == 0:
            raise ValueError(f"sample {sample.id!r} has no tokens")
        emb = self.encode(sample)
        spans = enumerate_spans(n, self.max_span_len)
        reps = span_represent(emb, spans)
        logits = reps @ self.head.weight.T + self.head.bias
        loss, d_logits = span_loss_grad(logits, self._labels_for(sample, spans))
        d_reps = d_logits @ self.head.weight
        dim = self.encoder.dim
        grad_tok = np.zeros((n, dim))
        np.add.at(grad_tok, spans[:, 0], d_reps[:, :dim])
        np.add.at(grad_tok, spans[:, 1], d_reps[:, dim:])
        grads: dict[str, np.ndarray | SparseRows] = {
            "head_w": d_logits.T @ reps,
            "head_b": d_logits.sum(axis=0),
        }
        grads.update(self._encoder_grads(sample, grad_tok, n))
        return loss, grads

    def predict(self, sample: Sample, emb: EmbeddingMatrix | None = None) -> PredictionSet:
        return span_predict(
            emb if emb is not None else self.encode(sample),
            self.head,
            sample,
            self.tagset,
            self.max_span_len,
        )


class MetaModel:
    """The prediction filter as a trainable unit over rendered examples."""

    kind = "meta"

    def __init__(self, params: MetaParams):
        self.params = params

    @classmethod
    def build(
        cls,
        dim: int = DEFAULT_DIM,
        hash_size: int = DEFAULT_HASH_SIZE,
        width: int = DEFAULT_WIDTH,
        threshold: float = meta.DEFAULT_THRESHOLD,
        seed: int = 0,
    ) -> "MetaModel":
        rng = np.random.default_rng(seed)
        weight, bias = init_meta_head(rng, dim)
        return cls(MetaParams(init_toy_encoder(rng, dim, hash_size, width), weight, bias, threshold))

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "emb_table": self.params.encoder.table,
            "emb_begin": self.params.encoder.begin_vec,
            "emb_end": self.params.encoder.end_vec,
            "meta_w": self.params.weight,
            "meta_b": self.params.bias,
        }

    def loss_and_grads(self, example: MetaExample) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
        return meta_loss_grad(self.params, example)

    def evaluate(self, items: Sequence[MetaExample]) -> tuple[float, float, float, frozenset[Mention]]:
        acc = meta_accuracy(self.params, list(items))
        return acc, acc, acc, frozenset()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.parameters().items():
            v[...] = snap[k]


EntityModel = SeqModel | CrfModel | SpanModel
AnyModel = EntityModel | MetaModel


def save_checkpoint(path: str, model: AnyModel) -> None:
    """Write parameters plus a JSON header to an npz file."""
    header: dict[str, object] = {"kind": model.kind}
    if isinstance(model, MetaModel):
        enc = model.params.encoder
        header.update(
            dim=enc.dim, hash_size=enc.hash_size, width=enc.width, threshold=model.params.threshold
        )
    else:
        enc = model.encoder
        header.update(
            entity_types=list(model.tagset.entity_types),
            dim=enc.dim,
            hash_size=enc.hash_size,
            width=enc.width,
        )
        if isinstance(model, SpanModel):
            header["max_span_len"] = model.max_span_len
    arrays = {k: np.asarray(v) for k, v in model.parameters().items()}
    arrays[CHECKPOINT_HEADER_KEY] = np.array(json.dumps(header))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str) -> AnyModel:
    """Rebuild a model from a checkpoint written by save_checkpoint."""
    with np.load(path, allow_pickle=False) as data:
        if CHECKPOINT_HEADER_KEY not in data:
            raise FormatError(f"{path}: not a model checkpoint (missing header)")
        header = json.loads(str(data[CHECKPOINT_HEADER_KEY]))
        arrays = {k: data[k].copy() for k in data.files if k != CHECKPOINT_HEADER_KEY}

    kind = header.get("kind")
    encoder = ToyEncoderParams(
        table=arrays["emb_table"],
        begin_vec=arrays["emb_begin"],
        end_vec=arrays["emb_end"],
        width=int(header["width"]),
    )
    if kind == "meta":
        return MetaModel(
            MetaParams(encoder, arrays["meta_w"], arrays["meta_b"], float(header["threshold"]))
        )
    tagset = Tagset(tuple(header["entity_types"]))
    if kind == "seq":
        return SeqModel(tagset, encoder, SeqHeadParams(arrays["head_w"], arrays["head_b"]))
    if kind == "crf":
        return CrfModel(
            tagset,
            encoder,
            CrfParams(
                arrays["head_w"], arrays["head_b"], arrays["trans"], arrays["start"], arrays["end"]
            ),
        )
    if kind == "span":
        return SpanModel(
            tagset,
            encoder,
            SpanHeadParams(arrays["head_w"], arrays["head_b"]),
            int(header["max_span_len"]),
        )
    raise FormatError(f"{path}: unknown model kind {kind!r}")
