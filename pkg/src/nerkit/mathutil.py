"""Small numerical helpers used by the model heads.

Everything here operates on float64 arrays and is deterministic.
"""

from __future__ import annotations

import zlib

import numpy as np


def token_hash(token: str, size: int) -> int:
    """Hash a token string into [0, size) deterministically across runs."""
    if size <= 0:
        raise ValueError(f"hash size must be positive, got {size}")
    return zlib.crc32(token.encode("utf-8")) % size


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Stable log(sum(exp(a))) along an axis."""
    amax = np.max(a, axis=axis, keepdims=True)
    # A fully -inf slice must come out as -inf, not nan.
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return float(out.item())
    return np.squeeze(out, axis=axis)


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along an axis."""
    shifted = a - np.max(a, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows of `logits` and its gradient.

    Args:
        logits: (k, c) unnormalized scores.
        labels: (k,) integer class indices.

    Returns:
        (loss, grad) where grad has the shape of `logits` and already
        includes the 1/k averaging factor.
    """
    k = logits.shape[0]
    if k == 0:
        raise ValueError("cross entropy over zero rows is undefined")
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    logprobs = shifted - logz[:, None]
    loss = -float(np.mean(logprobs[np.arange(k), labels]))
    grad = np.exp(logprobs)
    grad[np.arange(k), labels] -= 1.0
    grad /= k
    return loss, grad


def l2_normalize(s: np.ndarray) -> np.ndarray:
    """Normalize the last axis to unit L2 norm; zero vectors pass through."""
    nrm = np.linalg.norm(s, axis=-1, keepdims=True)
    return np.where(nrm > 0.0, s / np.where(nrm > 0.0, nrm, 1.0), s)


def l2_normalize_backward(s: np.ndarray, u: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    """Gradient of l2_normalize: rows of grads w.r.t. the raw sums.

    `s` is the pre-normalization input, `u` its normalized output and
    `grad_u` the upstream gradient; all share the same shape with the
    vector dimension last. At s == 0 the forward is the identity, so the
    gradient passes through unchanged.
    """
    nrm = np.linalg.norm(s, axis=-1, keepdims=True)
    dot = np.sum(u * grad_u, axis=-1, keepdims=True)
    safe = np.where(nrm > 0.0, nrm, 1.0)
    out = (grad_u - u * dot) / safe
    return np.where(nrm > 0.0, out, grad_u)
