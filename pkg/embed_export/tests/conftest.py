import json
import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "bob", "ann", "has", "and", "takes", "the", "a", "of", "daily",
    "flu", "dose", "shots",
    "##ke", "##s",
]

TEXTS = [
    "bob has flu",
    "ann has fluke",          # fluke -> flu ##ke
    "bob takes the dose",
    "ann has flus and flu",   # flus -> flu ##s
    "the dose of flu shots",
    "bob and ann",
    "flu shots daily",
    "ann takes a dose",
    "bob has zzz",            # zzz -> [UNK], still one aligned subword
    "the flu and the dose",
]


def whitespace_spans(text):
    spans = []
    pos = 0
    for word in text.split(" "):
        spans.append([pos, pos + len(word)])
        pos += len(word) + 1
    return spans


def write_corpus(path, texts, ids=None):
    ids = ids or [f"s{i:02d}" for i in range(len(texts))]
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, text in zip(ids, texts):
            obj = {"id": sample_id, "text": text, "tokens": whitespace_spans(text), "gold": []}
            fh.write(json.dumps(obj) + "\n")
    return {sample_id: len(text.split(" ")) for sample_id, text in zip(ids, texts)}


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A tiny randomly initialized encoder saved to disk; nothing downloads."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    d = tmp_path_factory.mktemp("tiny-encoder")
    vocab_path = d / "vocab.txt"
    vocab_path.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_path), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(7)
    BertModel(config).save_pretrained(str(d))
    tokenizer.save_pretrained(str(d))
    return str(d)


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "samples.jsonl"
    expected = write_corpus(str(path), TEXTS)
    return str(path), expected
