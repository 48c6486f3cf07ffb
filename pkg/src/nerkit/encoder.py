"""Embedding interface: per-sample matrices, a trainable hashed encoder,
and the binary embedding file format.

Every sample is represented by an (n + 2) x d float matrix whose first and
last rows belong to the begin and end boundary specials; rows 1..n carry
the token embeddings in order. Matrices from an external model arrive via
`load_embedding_file`; the built-in encoder below produces them from
trainable parameters and is differentiable end to end.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Sample
from .errors import FormatError
from .mathutil import l2_normalize, l2_normalize_backward, softmax, token_hash

MAGIC = b"NFEMB1"

DEFAULT_HASH_SIZE = 2**16
DEFAULT_DIM = 64
DEFAULT_WIDTH = 2


@dataclass(frozen=True)
class EmbeddingMatrix:
    """(n + 2) x d matrix: begin special, n token rows, end special."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[0] < 2:
            raise ValueError(f"embedding matrix needs >= 2 rows of vectors, got shape {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def n_tokens(self) -> int:
        return self.rows.shape[0] - 2

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def begin_special(self) -> np.ndarray:
        return self.rows[0]

    @property
    def end_special(self) -> np.ndarray:
        return self.rows[-1]

    @property
    def token_rows(self) -> np.ndarray:
        return self.rows[1:-1]


@dataclass
class ToyEncoderParams:
    """Trainable state of the hashed bag-of-context encoder."""

    table: np.ndarray  # (hash_size, d) token embeddings
    begin_vec: np.ndarray  # (d,)
    end_vec: np.ndarray  # (d,)
    width: int = DEFAULT_WIDTH

    def __post_init__(self) -> None:
        if self.width < 0:
            raise ValueError(f"context width must be >= 0, got {self.width}")
        if self.table.ndim != 2:
            raise ValueError("embedding table must be 2-dimensional")
        if self.begin_vec.shape != (self.dim,) or self.end_vec.shape != (self.dim,):
            raise ValueError("boundary vectors must match the table dimension")

    @property
    def hash_size(self) -> int:
        return int(self.table.shape[0])

    @property
    def dim(self) -> int:
        return int(self.table.shape[1])


def init_toy_encoder(
    rng: np.random.Generator,
    dim: int = DEFAULT_DIM,
    hash_size: int = DEFAULT_HASH_SIZE,
    width: int = DEFAULT_WIDTH,
) -> ToyEncoderParams:
    return ToyEncoderParams(
        table=rng.standard_normal((hash_size, dim)) * 0.5,
        begin_vec=rng.standard_normal(dim) * 0.5,
        end_vec=rng.standard_normal(dim) * 0.5,
        width=width,
    )


def hash_token_ids(sample: Sample, hash_size: int) -> np.ndarray:
    return np.array([token_hash(t, hash_size) for t in sample.token_texts()], dtype=np.int64)


def _windowed_sums(v: np.ndarray, width: int) -> np.ndarray:
    """Distance-weighted sums over [i-w, i+w] for the token positions.

    `v` holds the extended sequence (begin vec, token vecs, end vec); the
    result has one row per token (positions 1..n of the extended sequence).
    """
    n = v.shape[0] - 2
    s = v[1:n + 1].copy()
    for off in range(1, width + 1):
        coef = 1.0 / (1.0 + off)
        lo = np.maximum(0, np.arange(1, n + 1) - off)
        valid_left = np.arange(1, n + 1) - off >= 0
        if valid_left.any():
            s[valid_left] += coef * v[lo[valid_left]]
        hi = np.arange(1, n + 1) + off
        valid_right = hi <= n + 1
        if valid_right.any():
            s[valid_right] += coef * v[hi[valid_right]]
    return s


@dataclass
class _ToyForward:
    """Intermediate values cached for the backward pass."""

    ids: np.ndarray
    v: np.ndarray
    token_sums: np.ndarray
    token_rows: np.ndarray
    begin_att: np.ndarray
    end_att: np.ndarray
    begin_sum: np.ndarray
    end_sum: np.ndarray


def _toy_forward(sample: Sample, params: ToyEncoderParams) -> tuple[EmbeddingMatrix, _ToyForward]:
    n = len(sample.tokens)
    d = params.dim
    ids = hash_token_ids(sample, params.hash_size)
    v = np.empty((n + 2, d))
    v[0] = params.begin_vec
    v[-1] = params.end_vec
    if n:
        v[1:-1] = params.table[ids]

    token_sums = _windowed_sums(v, params.width) if n else np.zeros((0, d))
    token_rows = l2_normalize(token_sums)

    # Boundary rows summarize the whole sample: each special attends over
    # the token rows with its own vector as the query, so the row stays
    # input-dependent and differentiable.
    def pooled(query: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n == 0:
            return np.zeros(0), query.copy(), l2_normalize(query)
        att = softmax(token_rows @ query)
        s = query + att @ token_rows
        return att, s, l2_normalize(s)

    begin_att, begin_sum, begin_row = pooled(params.begin_vec)
    end_att, end_sum, end_row = pooled(params.end_vec)

    rows = np.empty((n + 2, d))
    rows[0] = begin_row
    rows[-1] = end_row
    if n:
        rows[1:-1] = token_rows
    emb = EmbeddingMatrix(rows=rows)
    return emb, _ToyForward(ids, v, token_sums, token_rows, begin_att, end_att, begin_sum, end_sum)


def encode_toy(sample: Sample, params: ToyEncoderParams) -> EmbeddingMatrix:
    """Embed a sample with the trainable hashed encoder.

    Token row i is the L2-normalized sum of the hashed embeddings in the
    window [i-w, i+w] over the boundary-extended sequence, each neighbor
    weighted 1/(1 + distance). Deterministic given (sample, params).
    """
    emb, _ = _toy_forward(sample, params)
    return emb


@dataclass
class SparseRows:
    """Row-sparse gradient for a large embedding table."""

    indices: np.ndarray  # (k,) unique, sorted
    rows: np.ndarray  # (k, d)

    def to_dense(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape)
        out[self.indices] = self.rows
        return out


def coalesce_rows(indices: np.ndarray, rows: np.ndarray) -> SparseRows:
    """Sum duplicate row indices into a sorted, unique sparse gradient."""
    if len(indices) == 0:
        return SparseRows(indices=np.zeros(0, dtype=np.int64), rows=np.zeros((0, rows.shape[1]) if rows.ndim == 2 else (0, 0)))
    uniq, inverse = np.unique(indices, return_inverse=True)
    summed = np.zeros((len(uniq), rows.shape[1]))
    np.add.at(summed, inverse, rows)
    return SparseRows(indices=uniq, rows=summed)


def encode_toy_backward(
    sample: Sample, params: ToyEncoderParams, grad_rows: np.ndarray
) -> dict[str, np.ndarray | SparseRows]:
    """Backpropagate a gradient on the embedding matrix into the params.

    Returns {"emb_table": SparseRows, "emb_begin": (d,), "emb_end": (d,)}.
    The forward intermediates are recomputed; callers only need to supply
    the same sample and params used in the forward pass.
    """
    emb, fwd = _toy_forward(sample, params)
    n = len(sample.tokens)
    d = params.dim
    if grad_rows.shape != (n + 2, d):
        raise ValueError(f"gradient shape {grad_rows.shape} does not match matrix {(n + 2, d)}")

    g_begin = np.zeros(d)
    g_end = np.zeros(d)
    g_token_rows = grad_rows[1:-1].copy() if n else np.zeros((0, d))

    def pooled_backward(
        grad_row: np.ndarray, query: np.ndarray, att: np.ndarray, s: np.ndarray, row: np.ndarray
    ) -> np.ndarray:
        """Returns the gradient w.r.t. the query; accumulates token grads."""
        nonlocal g_token_rows
        ds = l2_normalize_backward(s, row, grad_row)
        if n == 0:
            return ds
        # s = query + att @ token_rows, att = softmax(token_rows @ query)
        d_att = fwd.token_rows @ ds
        dz = att * (d_att - float(att @ d_att))
        g_token_rows += att[:, None] * ds[None, :] + dz[:, None] * query[None, :]
        return ds + fwd.token_rows.T @ dz

    g_begin += pooled_backward(grad_rows[0], params.begin_vec, fwd.begin_att, fwd.begin_sum, emb.rows[0])
    g_end += pooled_backward(grad_rows[-1], params.end_vec, fwd.end_att, fwd.end_sum, emb.rows[-1])

    g_v = np.zeros((n + 2, d))
    if n:
        d_sums = l2_normalize_backward(fwd.token_sums, fwd.token_rows, g_token_rows)
        g_v[1:-1] += d_sums
        idx = np.arange(1, n + 1)
        for off in range(1, params.width + 1):
            coef = 1.0 / (1.0 + off)
            left = idx - off
            valid = left >= 0
            if valid.any():
                np.add.at(g_v, left[valid], coef * d_sums[valid])
            right = idx + off
            valid = right <= n + 1
            if valid.any():
                np.add.at(g_v, right[valid], coef * d_sums[valid])
    g_begin += g_v[0]
    g_end += g_v[-1]
    table_grad = coalesce_rows(fwd.ids, g_v[1:-1]) if n else coalesce_rows(np.zeros(0, dtype=np.int64), np.zeros((0, d)))
    return {"emb_table": table_grad, "emb_begin": g_begin, "emb_end": g_end}


def write_embedding_file(path: str, matrices: dict[str, EmbeddingMatrix]) -> None:
    """Write per-sample matrices in the binary embedding format.

    Layout, all little-endian: the 6-byte magic, u32 dimension, then per
    sample a u32 id byte length, the UTF-8 id, a u32 row count, and the
    rows as float32 row-major. Samples are written in sorted id order so
    identical inputs produce identical bytes.
    """
    if not matrices:
        raise ValueError("refusing to write an embedding file with no samples")
    dims = {m.dim for m in matrices.values()}
    if len(dims) != 1:
        raise ValueError(f"inconsistent dimensions across samples: {sorted(dims)}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", dims.pop()))
        for sample_id in sorted(matrices):
            raw = sample_id.encode("utf-8")
            mat = matrices[sample_id]
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", mat.rows.shape[0]))
            fh.write(np.ascontiguousarray(mat.rows, dtype="<f4").tobytes())


def load_embedding_file(
    path: str, expected_tokens: dict[str, int] | None = None
) -> dict[str, EmbeddingMatrix]:
    """Read a binary embedding file into per-sample matrices.

    When `expected_tokens` maps sample ids to their token counts, each
    matrix must have exactly token count + 2 rows; mismatches raise a
    FormatError naming the sample.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an embedding file")
    pos = len(MAGIC)

    def take(count: int, context: str) -> bytes:
        nonlocal pos
        if pos + count > len(data):
            raise FormatError(f"{path}: truncated while reading {context}")
        chunk = data[pos:pos + count]
        pos += count
        return chunk

    (dim,) = struct.unpack("<I", take(4, "dimension"))
    if dim == 0:
        raise FormatError(f"{path}: dimension must be positive")
    out: dict[str, EmbeddingMatrix] = {}
    while pos < len(data):
        (id_len,) = struct.unpack("<I", take(4, "id length"))
        sample_id = take(id_len, "sample id").decode("utf-8")
        (rows,) = struct.unpack("<I", take(4, f"row count of {sample_id!r}"))
        if rows < 2:
            raise FormatError(f"{path}: sample {sample_id!r} has {rows} rows, needs the 2 boundary rows")
        if sample_id in out:
            raise FormatError(f"{path}: duplicate sample id {sample_id!r}")
        payload = take(rows * dim * 4, f"rows of {sample_id!r}")
        mat = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float64)
        if not np.all(np.isfinite(mat)):
            raise FormatError(f"{path}: sample {sample_id!r} contains non-finite values")
        out[sample_id] = EmbeddingMatrix(rows=mat)
    if expected_tokens is not None:
        for sample_id, n_tokens in expected_tokens.items():
            if sample_id not in out:
                raise FormatError(f"{path}: missing sample {sample_id!r}")
            got = out[sample_id].rows.shape[0]
            if got != n_tokens + 2:
                raise FormatError(
                    f"{path}: sample {sample_id!r} has {got} rows, expected {n_tokens + 2}"
                )
    return out
