import zlib

import numpy as np
import pytest

from nerkit.mathutil import (
    cross_entropy_grad,
    l2_normalize,
    l2_normalize_backward,
    logsumexp,
    softmax,
    token_hash,
)

from _util import max_rel_err, numeric_grad


def test_token_hash_matches_crc32():
    for tok in ["", "a", "hello", "Bob", "über", "x" * 100]:
        assert token_hash(tok, 1 << 16) == zlib.crc32(tok.encode("utf-8")) % (1 << 16)


def test_token_hash_range_and_determinism():
    rng = np.random.default_rng(0)
    for _ in range(200):
        size = int(rng.integers(1, 1000))
        tok = "t" + str(rng.integers(10**6))
        h = token_hash(tok, size)
        assert 0 <= h < size
        assert h == token_hash(tok, size)


def test_logsumexp_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.standard_normal(int(rng.integers(1, 8)))
        assert logsumexp(a) == pytest.approx(np.log(np.sum(np.exp(a))), abs=1e-12)


def test_logsumexp_stable_for_large_inputs():
    a = np.array([1000.0, 1001.0])
    # exact value is 1001 + log(1 + e^-1)
    assert logsumexp(a) == pytest.approx(1001.0 + np.log1p(np.exp(-1.0)), abs=1e-12)


def test_logsumexp_axis():
    a = np.arange(6.0).reshape(2, 3)
    got = logsumexp(a, axis=1)
    want = [np.log(np.sum(np.exp(a[i]))) for i in range(2)]
    assert np.allclose(got, want, atol=1e-12)


def test_softmax_rows_sum_to_one_and_match_naive():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 5)) * 3
    p = softmax(a, axis=-1)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    naive = np.exp(a) / np.exp(a).sum(axis=-1, keepdims=True)
    assert np.allclose(p, naive, atol=1e-12)
    big = softmax(np.array([0.0, 10000.0]))
    assert np.isfinite(big).all()


def test_cross_entropy_uniform_loss_is_log_k():
    logits = np.zeros((2, 5))
    loss, grad = cross_entropy_grad(logits, np.array([0, 3]))
    assert loss == pytest.approx(np.log(5.0), abs=1e-12)
    assert grad.shape == (2, 5)


def test_cross_entropy_known_grad():
    logits = np.zeros((1, 2))
    loss, grad = cross_entropy_grad(logits, np.array([0]))
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)
    assert np.allclose(grad, [[-0.5, 0.5]], atol=1e-12)


def test_cross_entropy_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((6, 4))
    labels = rng.integers(0, 4, size=6)
    _, grad = cross_entropy_grad(logits, labels)
    num = numeric_grad(lambda: cross_entropy_grad(logits, labels)[0], logits)
    assert max_rel_err(grad, num) < 1e-4


def test_cross_entropy_empty_raises():
    with pytest.raises(ValueError):
        cross_entropy_grad(np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_l2_normalize_unit_norm_and_zero_passthrough():
    v = np.array([3.0, 4.0])
    u = l2_normalize(v)
    assert np.allclose(u, [0.6, 0.8], atol=1e-12)
    z = l2_normalize(np.zeros(4))
    assert np.allclose(z, 0.0)


def test_l2_normalize_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(20):
        s = rng.standard_normal(5)
        g = rng.standard_normal(5)

        def loss():
            return float(g @ l2_normalize(s))

        analytic = l2_normalize_backward(s, l2_normalize(s), g)
        num = numeric_grad(loss, s)
        assert max_rel_err(analytic, num) < 1e-4


def test_l2_normalize_backward_at_zero_is_identity():
    g = np.array([1.0, -2.0, 3.0])
    out = l2_normalize_backward(np.zeros(3), np.zeros(3), g)
    assert np.allclose(out, g)
