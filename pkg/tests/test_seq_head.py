import numpy as np
import pytest

from nerkit.bio import Tagset
from nerkit.corpus import Mention, make_sample
from nerkit.encoder import EmbeddingMatrix
from nerkit.seq_head import init_seq_head, seq_decode, seq_logits, seq_loss_grad, seq_predict

from _util import max_rel_err, numeric_grad


def test_logits_shape_and_linearity():
    rng = np.random.default_rng(0)
    head = init_seq_head(rng, n_tags=5, dim=4)
    emb = EmbeddingMatrix(rng.standard_normal((6, 4)))
    logits = seq_logits(emb, head)
    assert logits.shape == (4, 5)
    assert np.allclose(logits, emb.token_rows @ head.weight.T + head.bias, atol=1e-12)


def test_uniform_loss_is_log_tag_count():
    logits = np.zeros((3, 5))
    loss, grad = seq_loss_grad(logits, [0, 1, 4])
    assert loss == pytest.approx(np.log(5.0), abs=1e-12)
    assert grad.shape == (3, 5)


def test_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((7, 5))
    gold = rng.integers(0, 5, size=7).tolist()
    _, grad = seq_loss_grad(logits, gold)
    num = numeric_grad(lambda: seq_loss_grad(logits, gold)[0], logits)
    assert max_rel_err(grad, num) < 1e-4


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        seq_loss_grad(np.zeros((0, 3)), [])


def test_decode_is_argmax_with_lowest_index_ties():
    logits = np.array([[1.0, 3.0, 3.0], [0.0, 0.0, 0.0], [5.0, 1.0, 9.0]])
    assert seq_decode(logits) == [1, 0, 2]


def test_predict_decodes_mentions():
    ts = Tagset(("disease",))
    sample = make_sample("s1", "Bob has HIV and flu.")
    # emissions force B-disease on the third token only
    logits_rows = np.zeros((len(sample.tokens) + 2, 3))
    logits_rows[3, 1] = 10.0
    head_w = np.eye(3)
    emb = EmbeddingMatrix(logits_rows)

    class IdentityHead:
        weight = head_w
        bias = np.zeros(3)

    got = seq_predict(emb, IdentityHead(), sample, ts)
    assert got == {Mention("s1", "disease", 8, 11)}
