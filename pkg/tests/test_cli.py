import json
import os

import pytest

from nerkit.cli import main
from nerkit.corpus import read_predictions
from nerkit.meta import read_meta_examples

FAST_TRAIN = [
    "--dim", "16", "--hash-size", "128", "--width", "1",
    "--lr", "2e-2", "--batch-size", "4", "--max-epochs", "2", "--patience", "5",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Drive every subcommand once, smallest corpus that exercises them all."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main([
        "synth", "--out", str(data),
        "--train", "30", "--val", "10", "--test", "10", "--seed", "5",
    ]) == 0

    paths = {
        "train_jsonl": str(data / "train.jsonl"),
        "val_jsonl": str(data / "val.jsonl"),
        "test_jsonl": str(data / "test.jsonl"),
    }

    runs = {}
    for kind, seed in (("seq", "2"), ("span", "3")):
        run = root / f"run-{kind}"
        argv = [
            "train", "--model", kind,
            "--train", paths["train_jsonl"], "--val", paths["val_jsonl"],
            "--out", str(run), "--seed", seed, *FAST_TRAIN,
        ]
        if kind == "span":
            argv += ["--max-span-len", "4"]
        assert main(argv) == 0
        runs[kind] = str(run)

        pred = root / f"pred-{kind}.tsv"
        assert main([
            "predict", "--checkpoint", os.path.join(str(run), "checkpoint.npz"),
            "--corpus", paths["test_jsonl"], "--out", str(pred),
        ]) == 0
        paths[f"pred_{kind}"] = str(pred)
    paths.update(run_seq=runs["seq"], run_span=runs["span"])

    union_out = root / "pred-union.tsv"
    assert main([
        "combine", "--mode", "union", "--out", str(union_out),
        paths["pred_seq"], paths["pred_span"],
    ]) == 0
    paths["pred_union"] = str(union_out)

    mv_out = root / "pred-mv.tsv"
    assert main([
        "combine", "--mode", "majvote", "--out", str(mv_out),
        paths["pred_seq"], paths["pred_span"],
    ]) == 0
    paths["pred_mv"] = str(mv_out)

    meta_data = root / "meta-data"
    assert main([
        "meta-prepare", "--seq-run", runs["seq"], "--span-run", runs["span"],
        "--train", paths["train_jsonl"], "--val", paths["val_jsonl"],
        "--out", str(meta_data), "--seed", "7",
    ]) == 0
    paths["meta_train"] = str(meta_data / "train.jsonl")
    paths["meta_heldout"] = str(meta_data / "heldout.jsonl")

    meta_run = root / "run-meta"
    assert main([
        "meta-train", "--train", paths["meta_train"], "--heldout", paths["meta_heldout"],
        "--out", str(meta_run), "--seed", "4", *FAST_TRAIN,
    ]) == 0
    paths["run_meta"] = str(meta_run)

    filtered = root / "pred-filtered.tsv"
    assert main([
        "meta-filter", "--checkpoint", os.path.join(str(meta_run), "checkpoint.npz"),
        "--pred", paths["pred_union"], "--corpus", paths["test_jsonl"],
        "--out", str(filtered),
    ]) == 0
    paths["pred_filtered"] = str(filtered)
    return paths


def test_synth_writes_splits_and_resolved_config(pipeline):
    for key in ("train_jsonl", "val_jsonl", "test_jsonl"):
        assert os.path.exists(pipeline[key])
    resolved = os.path.join(os.path.dirname(pipeline["train_jsonl"]), "config.resolved")
    text = open(resolved, encoding="utf-8").read()
    assert "seed = 5" in text
    assert "train = 30" in text


def test_train_run_directory_contents(pipeline):
    run = pipeline["run_seq"]
    assert os.path.exists(os.path.join(run, "checkpoint.npz"))
    with open(os.path.join(run, "summary.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    with open(os.path.join(run, "metrics.jsonl"), encoding="utf-8") as fh:
        metric_lines = [json.loads(line) for line in fh if line.strip()]
    assert summary["epochs_run"] == len(metric_lines) <= 2
    assert 1 <= summary["best_epoch"] <= summary["epochs_run"]
    epoch_files = sorted(os.listdir(os.path.join(run, "epochs")))
    assert len(epoch_files) == summary["epochs_run"]
    assert epoch_files[0] == "epoch_001.tsv"
    assert {"epoch", "train_loss", "precision", "recall", "f1"} <= set(metric_lines[0])


def test_combine_union_and_majority_semantics(pipeline):
    a = read_predictions(pipeline["pred_seq"])
    b = read_predictions(pipeline["pred_span"])
    assert read_predictions(pipeline["pred_union"]) == a | b
    assert read_predictions(pipeline["pred_mv"]) == a & b


def test_meta_prepare_outputs_disjoint_files(pipeline):
    tr = read_meta_examples(pipeline["meta_train"])
    held = read_meta_examples(pipeline["meta_heldout"])
    assert tr
    assert held
    tr_keys = {(e.rendered_text, e.label) for e in tr}
    held_keys = {(e.rendered_text, e.label) for e in held}
    assert not (tr_keys & held_keys)


def test_meta_filter_is_a_subset(pipeline):
    kept = read_predictions(pipeline["pred_filtered"])
    assert kept <= read_predictions(pipeline["pred_union"])


def test_score_prints_report(pipeline, capsys):
    assert main([
        "score", "--gold", pipeline["test_jsonl"], "--pred", pipeline["pred_seq"],
        "--per-type",
    ]) == 0
    out = capsys.readouterr().out
    assert "P=" in out and "R=" in out and "F1=" in out
    assert "alpha: " in out


def test_predict_jobs_flag_gives_identical_output(pipeline, tmp_path):
    out2 = tmp_path / "pred-jobs2.tsv"
    assert main([
        "predict", "--checkpoint", os.path.join(pipeline["run_seq"], "checkpoint.npz"),
        "--corpus", pipeline["test_jsonl"], "--out", str(out2), "--jobs", "2",
    ]) == 0
    with open(pipeline["pred_seq"], "rb") as fh:
        baseline = fh.read()
    with open(out2, "rb") as fh:
        parallel = fh.read()
    assert baseline == parallel


def test_outputs_create_missing_parent_directories(pipeline, tmp_path):
    nested = tmp_path / "a" / "b" / "pred.tsv"
    assert main([
        "predict", "--checkpoint", os.path.join(pipeline["run_seq"], "checkpoint.npz"),
        "--corpus", pipeline["test_jsonl"], "--out", str(nested),
    ]) == 0
    combined = tmp_path / "c" / "union.tsv"
    assert main([
        "combine", "--mode", "union", "--out", str(combined),
        str(nested), pipeline["pred_span"],
    ]) == 0
    assert read_predictions(str(combined)) == (
        read_predictions(str(nested)) | read_predictions(pipeline["pred_span"])
    )


def test_config_file_defaults_with_flag_override(pipeline, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# defaults\nlr = 0.05\nmax_epochs = 1\n", encoding="utf-8")
    out = tmp_path / "run"
    assert main([
        "train", "--config", str(cfg), "--model", "seq",
        "--train", pipeline["train_jsonl"], "--val", pipeline["val_jsonl"],
        "--out", str(out), "--dim", "8", "--hash-size", "64",
        "--lr", "0.01",
    ]) == 0
    resolved = (out / "config.resolved").read_text(encoding="utf-8")
    assert "lr = 0.01" in resolved  # explicit flag beats the config file
    assert "max_epochs = 1" in resolved  # config file beats the built-in default


def test_bad_configuration_exits_2(pipeline, tmp_path, capsys):
    rc = main([
        "train", "--model", "seq",
        "--train", pipeline["train_jsonl"], "--val", pipeline["val_jsonl"],
        "--out", str(tmp_path / "x"), "--lr", "0",
    ])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
    assert main(["synth", "--out", str(tmp_path / "y"), "--train", "0"]) == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    rc = main([
        "predict", "--checkpoint", str(tmp_path / "missing.npz"),
        "--corpus", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "o.tsv"),
    ])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
