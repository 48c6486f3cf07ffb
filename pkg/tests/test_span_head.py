import numpy as np
import pytest

from nerkit.bio import Tagset
from nerkit.corpus import Mention, make_sample
from nerkit.encoder import EmbeddingMatrix
from nerkit.span_head import (
    enumerate_spans,
    init_span_head,
    span_count,
    span_gold_labels,
    span_loss_grad,
    span_predict,
    span_represent,
)

from _util import max_rel_err, numeric_grad


def brute_force_spans(n, msl):
    return [(b, e) for b in range(n) for e in range(b, n) if e - b + 1 <= msl]


def test_span_count_matches_brute_force_spot_checks():
    for n in range(0, 20):
        for msl in range(1, 20):
            assert span_count(n, msl) == len(brute_force_spans(n, msl))


def test_enumerate_spans_frozen_example():
    got = [tuple(r) for r in enumerate_spans(4, 2)]
    assert got == [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3)]
    assert span_count(4, 2) == 7


def test_enumerate_spans_lexicographic_and_inclusive():
    spans = enumerate_spans(9, 4)
    as_tuples = [tuple(r) for r in spans]
    assert as_tuples == sorted(as_tuples)
    assert all(0 <= b <= e < 9 and e - b + 1 <= 4 for b, e in as_tuples)
    assert len(as_tuples) == span_count(9, 4)


def test_enumerate_spans_empty():
    assert enumerate_spans(0, 5).shape == (0, 2)
    assert span_count(0, 5) == 0


def test_span_represent_concatenates_boundaries():
    rng = np.random.default_rng(0)
    emb = EmbeddingMatrix(rng.standard_normal((6, 3)))
    spans = enumerate_spans(4, 3)
    reps = span_represent(emb, spans)
    assert reps.shape == (len(spans), 6)
    tok = emb.token_rows
    for r, (b, e) in zip(reps, spans):
        assert np.allclose(r, np.concatenate([tok[b], tok[e]]), atol=1e-12)


def test_span_gold_labels_nested():
    ts = Tagset(("alpha", "beta"))
    text = "aa bb cc"
    sample = make_sample(
        "s",
        text,
        gold={Mention("s", "alpha", 0, 5), Mention("s", "beta", 3, 5)},
    )
    spans = enumerate_spans(3, 3)
    labels, unreachable = span_gold_labels(sample, spans, ts)
    by_span = dict(zip((tuple(r) for r in spans), labels))
    assert by_span[(0, 1)] == 1  # alpha over both tokens
    assert by_span[(1, 1)] == 2  # nested beta on the second token
    assert by_span[(0, 0)] == 0
    assert by_span[(2, 2)] == 0
    assert unreachable == 0


def test_span_gold_labels_counts_unreachable():
    ts = Tagset(("alpha",))
    text = "aa bb cc dd"
    sample = make_sample(
        "s",
        text,
        gold={Mention("s", "alpha", 0, 8), Mention("s", "alpha", 1, 2)},
    )
    # cap 2 makes the three-token mention unreachable; (1,2) is misaligned
    spans = enumerate_spans(4, 2)
    labels, unreachable = span_gold_labels(sample, spans, ts)
    assert unreachable == 2
    assert labels.sum() == 0


def test_span_loss_uniform_is_log_class_count():
    logits = np.zeros((4, 3))
    loss, grad = span_loss_grad(logits, np.zeros(4, dtype=int))
    assert loss == pytest.approx(np.log(3.0), abs=1e-12)
    assert grad.shape == (4, 3)


def test_span_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((12, 3))
    labels = rng.integers(0, 3, size=12)
    _, grad = span_loss_grad(logits, labels)
    num = numeric_grad(lambda: span_loss_grad(logits, labels)[0], logits)
    assert max_rel_err(grad, num) < 1e-4


def test_span_predict_maps_spans_to_mentions():
    ts = Tagset(("alpha", "beta"))
    sample = make_sample("s", "aa bb cc")
    rng = np.random.default_rng(2)
    emb = EmbeddingMatrix(rng.standard_normal((5, 2)))
    spans = enumerate_spans(3, 3)

    class Head:
        # one-hot weights pick specific spans: scores come out of bias only
        weight = np.zeros((3, 4))
        bias = np.array([0.0, 0.0, 0.0])

    # bias tie at zero keeps everything silent: argmax picks class 0 first
    assert span_predict(emb, Head(), sample, ts, max_span_len=3) == set()

    class Loud:
        weight = np.zeros((3, 4))
        bias = np.array([0.0, 1.0, 0.0])

    got = span_predict(emb, Loud(), sample, ts, max_span_len=3)
    # every span becomes an alpha mention, token-inclusive to char offsets
    assert Mention("s", "alpha", 0, 2) in got
    assert Mention("s", "alpha", 0, 5) in got
    assert Mention("s", "alpha", 3, 8) in got
    assert len(got) == len(spans)


def test_overlapping_predictions_are_allowed():
    ts = Tagset(("alpha",))
    sample = make_sample("s", "aa bb")
    emb = EmbeddingMatrix(np.ones((4, 2)))

    class Head:
        weight = np.zeros((2, 4))
        bias = np.array([0.0, 0.5])

    got = span_predict(emb, Head(), sample, ts, max_span_len=2)
    assert got == {
        Mention("s", "alpha", 0, 2),
        Mention("s", "alpha", 0, 5),
        Mention("s", "alpha", 3, 5),
    }
