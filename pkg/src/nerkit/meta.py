"""Learned prediction filter: judges rendered predictions as correct or not.

Each candidate prediction is rendered into a single text that leads with
the predicted type and wraps the predicted span in [e] ... [/e] markers,
keeping the sample text verbatim. A binary classifier over the pooled
(begin-special) row of the rendered text's embedding matrix scores the
prediction; the filter keeps predictions whose correct-class probability
reaches the decision threshold, so its output is always a subset of its
input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Mention, PredictionSet, Sample, make_sample, sorted_mentions
from .encoder import SparseRows, ToyEncoderParams, encode_toy, encode_toy_backward
from .errors import ParseError
from .mathutil import cross_entropy_grad, softmax

OPEN_MARKER = "[e]"
CLOSE_MARKER = "[/e]"

LABEL_INCORRECT = "incorrect"
LABEL_CORRECT = "correct"
# Class indices for the binary head.
_CLASS_OF = {LABEL_INCORRECT: 0, LABEL_CORRECT: 1}

DEFAULT_THRESHOLD = 0.5
DEFAULT_HOLDOUT_FRAC = 0.15


@dataclass(frozen=True)
class MetaExample:
    """One rendered prediction with its correctness label."""

    rendered_text: str
    label: str
    provenance: str

    def __post_init__(self) -> None:
        if self.label not in _CLASS_OF:
            raise ValueError(f"label must be one of {sorted(_CLASS_OF)}, got {self.label!r}")
        if self.rendered_text.count(OPEN_MARKER) != 1 or self.rendered_text.count(CLOSE_MARKER) != 1:
            raise ValueError("rendered text must contain exactly one open and one close marker")

    @property
    def class_index(self) -> int:
        return _CLASS_OF[self.label]


@dataclass
class MetaParams:
    """Encoder plus a binary linear layer over the pooled row."""

    encoder: ToyEncoderParams
    weight: np.ndarray  # (2, d)
    bias: np.ndarray  # (2,)
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")


def init_meta_head(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.standard_normal((2, dim)) * 0.01, np.zeros(2)


def render(prediction: Mention, sample: Sample) -> str:
    """Render a prediction for classification.

    Format: `<entity_type> <prefix>[e] <span text> [/e]<suffix>` where
    prefix and suffix are the sample text around the span, verbatim. The
    type leads as the first whitespace-delimited token and single spaces
    set the markers off from the span text.
    """
    if prediction.sample_id != sample.id:
        raise ValueError(f"prediction {prediction} does not belong to sample {sample.id!r}")
    if prediction.end > len(sample.text):
        raise ValueError(f"prediction {prediction} exceeds the sample text")
    if any(c.isspace() for c in prediction.entity_type):
        raise ValueError(f"entity type {prediction.entity_type!r} cannot contain whitespace")
    if OPEN_MARKER in sample.text or CLOSE_MARKER in sample.text:
        raise ValueError(f"sample {sample.id!r} already contains span markers")
    prefix = sample.text[:prediction.begin]
    span = sample.text[prediction.begin:prediction.end]
    suffix = sample.text[prediction.end:]
    return f"{prediction.entity_type} {prefix}{OPEN_MARKER} {span} {CLOSE_MARKER}{suffix}"


def example_from_prediction(
    prediction: Mention, sample: Sample, gold: frozenset[Mention] | PredictionSet, provenance: str
) -> MetaExample:
    label = LABEL_CORRECT if prediction in gold else LABEL_INCORRECT
    return MetaExample(rendered_text=render(prediction, sample), label=label, provenance=provenance)


def build_training_set(
    seq_epoch_predictions: list[frozenset[Mention]],
    span_epoch_predictions: list[frozenset[Mention]],
    train_samples: list[Sample],
    val_samples: list[Sample],
    holdout_frac: float = DEFAULT_HOLDOUT_FRAC,
    seed: int = 0,
) -> tuple[list[MetaExample], list[MetaExample]]:
    """Assemble the filter's training data from training-run byproducts.

    Every validation prediction captured at every epoch of the two source
    models becomes an example labeled by strict gold membership; every
    gold mention of the original training split becomes a correct example.
    Identical (text, label) pairs are deduplicated, then a seeded shuffle
    carves off the holdout fraction.
    """
    if not (0.0 <= holdout_frac < 1.0):
        raise ValueError(f"holdout fraction must lie in [0, 1), got {holdout_frac}")
    val_by_id = {s.id: s for s in val_samples}

    examples: list[MetaExample] = []
    for source, per_epoch in (("seq", seq_epoch_predictions), ("span", span_epoch_predictions)):
        for epoch, preds in enumerate(per_epoch, start=1):
            for p in sorted_mentions(preds):
                sample = val_by_id.get(p.sample_id)
                if sample is None:
                    raise ValueError(f"prediction {p} references unknown validation sample")
                examples.append(
                    example_from_prediction(p, sample, sample.gold, f"{source}:epoch{epoch}")
                )
    for sample in train_samples:
        for m in sorted_mentions(sample.gold):
            examples.append(MetaExample(render(m, sample), LABEL_CORRECT, "gold"))

    seen: set[tuple[str, str]] = set()
    unique: list[MetaExample] = []
    for ex in examples:
        key = (ex.rendered_text, ex.label)
        if key not in seen:
            seen.add(key)
            unique.append(ex)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unique))
    n_held = int(len(unique) * holdout_frac)
    heldout = [unique[i] for i in order[:n_held]]
    train = [unique[i] for i in order[n_held:]]
    return train, heldout


def write_meta_examples(path: str, examples: list[MetaExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {"text": ex.rendered_text, "label": ex.label, "provenance": ex.provenance},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_meta_examples(path: str) -> list[MetaExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                examples.append(
                    MetaExample(
                        rendered_text=obj["text"],
                        label=obj["label"],
                        provenance=str(obj.get("provenance", "")),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, line_no, f"bad example record: {exc}") from None
    return examples


def _rendered_sample(text: str) -> Sample:
    return make_sample("rendered", text)


def meta_logits(params: MetaParams, rendered_text: str) -> np.ndarray:
    emb = encode_toy(_rendered_sample(rendered_text), params.encoder)
    return params.weight @ emb.begin_special + params.bias


def meta_prob_correct(params: MetaParams, rendered_text: str) -> float:
    return float(softmax(meta_logits(params, rendered_text))[_CLASS_OF[LABEL_CORRECT]])


def meta_loss_grad(
    params: MetaParams, example: MetaExample
) -> tuple[float, dict[str, np.ndarray | SparseRows]]:
    """Cross-entropy on one example; gradients for head and encoder."""
    sample = _rendered_sample(example.rendered_text)
    emb = encode_toy(sample, params.encoder)
    pooled = emb.begin_special
    logits = (params.weight @ pooled + params.bias)[None, :]
    loss, d_logits = cross_entropy_grad(logits, np.array([example.class_index]))
    d_logits = d_logits[0]
    grads: dict[str, np.ndarray | SparseRows] = {
        "meta_w": np.outer(d_logits, pooled),
        "meta_b": d_logits,
    }
    grad_rows = np.zeros_like(emb.rows)
    grad_rows[0] = params.weight.T @ d_logits
    grads.update(encode_toy_backward(sample, params.encoder, grad_rows))
    return loss, grads


def meta_accuracy(params: MetaParams, examples: list[MetaExample]) -> float:
    """Heldout accuracy under the decision threshold."""
    if not examples:
        raise ValueError("accuracy over zero examples is undefined")
    hits = 0
    for ex in examples:
        keep = meta_prob_correct(params, ex.rendered_text) >= params.threshold
        hits += int(keep == (ex.label == LABEL_CORRECT))
    return hits / len(examples)


def meta_filter(
    preds: PredictionSet | frozenset[Mention], params: MetaParams, samples: dict[str, Sample]
) -> PredictionSet:
    """Keep predictions the classifier deems correct; output <= input."""
    kept: PredictionSet = set()
    for p in sorted_mentions(preds):
        sample = samples.get(p.sample_id)
        if sample is None:
            raise ValueError(f"prediction {p} references unknown sample {p.sample_id!r}")
        if meta_prob_correct(params, render(p, sample)) >= params.threshold:
            kept.add(p)
    return kept
