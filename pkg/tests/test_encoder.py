import numpy as np
import pytest

from nerkit.corpus import make_sample
from nerkit.encoder import (
    EmbeddingMatrix,
    SparseRows,
    coalesce_rows,
    encode_toy,
    encode_toy_backward,
    init_toy_encoder,
    load_embedding_file,
    write_embedding_file,
)
from nerkit.errors import FormatError
from nerkit.mathutil import token_hash

from _util import max_rel_err, numeric_grad, random_sample, sparse_to_dense


def small_encoder(seed=0, dim=6, hash_size=64, width=2):
    return init_toy_encoder(np.random.default_rng(seed), dim=dim, hash_size=hash_size, width=width)


def reference_rows(sample, params):
    """Independent re-implementation: explicit loops, no vectorization."""
    words = sample.token_texts()
    n = len(words)
    v = np.zeros((n + 2, params.table.shape[1]))
    v[0] = params.begin_vec
    v[n + 1] = params.end_vec
    for i, w in enumerate(words):
        v[i + 1] = params.table[token_hash(w, params.table.shape[0])]

    def normalize(x):
        norm = np.linalg.norm(x)
        return x / norm if norm > 0 else x

    token_rows = np.zeros((n, v.shape[1]))
    for i in range(1, n + 1):
        acc = np.zeros(v.shape[1])
        for j in range(max(0, i - params.width), min(n + 1, i + params.width) + 1):
            acc += v[j] / (1 + abs(i - j))
        token_rows[i - 1] = normalize(acc)

    def pooled(query):
        scores = token_rows @ query
        att = np.exp(scores - scores.max())
        att /= att.sum()
        return normalize(query + att @ token_rows)

    rows = np.zeros((n + 2, v.shape[1]))
    rows[0] = pooled(params.begin_vec)
    rows[1:-1] = token_rows
    rows[-1] = pooled(params.end_vec)
    return rows


def test_embedding_matrix_validation():
    with pytest.raises(ValueError):
        EmbeddingMatrix(np.zeros((1, 4)))
    with pytest.raises(ValueError):
        EmbeddingMatrix(np.full((3, 4), np.nan))
    m = EmbeddingMatrix(np.ones((3, 4)))
    assert m.token_rows.shape == (1, 4)
    assert m.n_tokens == 1
    assert np.allclose(m.begin_special, 1.0)
    assert np.allclose(m.end_special, 1.0)


def test_encode_toy_shape_and_normalization():
    rng = np.random.default_rng(1)
    params = small_encoder()
    for i in range(10):
        sample = random_sample(rng, f"s{i}", int(rng.integers(1, 9)))
        emb = encode_toy(sample, params)
        assert emb.rows.shape == (len(sample.tokens) + 2, 6)
        norms = np.linalg.norm(emb.rows, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)


def test_encode_toy_matches_loop_reference():
    rng = np.random.default_rng(2)
    for width in (0, 1, 2, 3):
        params = small_encoder(seed=width, width=width)
        for i in range(10):
            sample = random_sample(rng, f"s{i}", int(rng.integers(1, 9)))
            got = encode_toy(sample, params).rows
            want = reference_rows(sample, params)
            assert np.allclose(got, want, atol=1e-12)


def test_encode_toy_is_deterministic():
    params = small_encoder()
    sample = make_sample("s", "one two three")
    a = encode_toy(sample, params).rows
    b = encode_toy(sample, params).rows
    assert np.array_equal(a, b)


def test_coalesce_rows_sums_duplicates():
    idx = np.array([3, 1, 3])
    rows = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    sr = coalesce_rows(idx, rows)
    dense = sparse_to_dense(sr, (5, 2))
    assert np.allclose(dense[3], [3.0, 0.0])
    assert np.allclose(dense[1], [0.0, 1.0])
    assert len(sr.indices) == len(set(sr.indices.tolist()))


def test_encoder_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    params = small_encoder(dim=5, hash_size=32, width=2)
    for i in range(5):
        sample = random_sample(rng, f"s{i}", int(rng.integers(1, 7)))
        n = len(sample.tokens)
        grad_rows = rng.standard_normal((n + 2, 5))

        def loss():
            return float(np.sum(grad_rows * encode_toy(sample, params).rows))

        grads = encode_toy_backward(sample, params, grad_rows)
        table_grad = sparse_to_dense(grads["emb_table"], params.table.shape)

        num_table = numeric_grad(loss, params.table)
        assert max_rel_err(table_grad, num_table) < 1e-4
        for key, arr in (("emb_begin", params.begin_vec), ("emb_end", params.end_vec)):
            assert max_rel_err(grads[key], numeric_grad(loss, arr)) < 1e-4


def test_untouched_table_rows_get_no_gradient():
    rng = np.random.default_rng(4)
    params = small_encoder(hash_size=512)
    sample = random_sample(rng, "s0", 4)
    grads = encode_toy_backward(sample, params, np.ones((6, 6)))
    touched = {token_hash(w, 512) for w in sample.token_texts()}
    assert set(grads["emb_table"].indices.tolist()) <= touched


def test_embedding_file_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    params = small_encoder()
    mats = {}
    for i in range(4):
        sample = random_sample(rng, f"s{i}", int(rng.integers(1, 6)))
        mats[sample.id] = encode_toy(sample, params)
    path = str(tmp_path / "emb.bin")
    write_embedding_file(path, mats)
    loaded = load_embedding_file(path)
    assert set(loaded) == set(mats)
    for sid, emb in mats.items():
        # file stores float32, so loaded values equal the rounded originals
        assert np.array_equal(loaded[sid].rows, emb.rows.astype(np.float32).astype(loaded[sid].rows.dtype))


def test_embedding_file_rejects_truncation(tmp_path):
    params = small_encoder()
    path = str(tmp_path / "emb.bin")
    write_embedding_file(path, {"s": encode_toy(make_sample("s", "a b c"), params)})
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-5])
    with pytest.raises(FormatError):
        load_embedding_file(path)


def test_embedding_file_rejects_bad_magic(tmp_path):
    path = str(tmp_path / "emb.bin")
    open(path, "wb").write(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FormatError):
        load_embedding_file(path)


def test_embedding_file_expected_tokens(tmp_path):
    params = small_encoder()
    sample = make_sample("s", "a b c")
    path = str(tmp_path / "emb.bin")
    write_embedding_file(path, {"s": encode_toy(sample, params)})
    loaded = load_embedding_file(path, expected_tokens={"s": 3})
    assert loaded["s"].rows.shape[0] == 5
    with pytest.raises(FormatError) as exc:
        load_embedding_file(path, expected_tokens={"s": 4})
    assert "s" in str(exc.value)
