"""Command-line interface.

Subcommands: train, predict, combine, meta-prepare, meta-train,
meta-filter, score, synth. Every run is deterministic given --seed and
writes the resolved configuration next to its outputs in the same
`key = value` format the --config option accepts; explicit flags override
config-file values. Exit codes: 0 success, 2 bad usage or configuration,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import combiners, corpus, encoder, meta, models, scorer, span_head, synth, trainer
from .bio import Tagset
from .errors import ConfigError, NerkitError


def _add_corpus_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["jsonl", "tsv-tokens"], default="jsonl",
                   help="corpus file format")


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=encoder.DEFAULT_DIM, help="embedding dimension")
    p.add_argument("--hash-size", type=int, default=encoder.DEFAULT_HASH_SIZE,
                   help="hashed vocabulary size")
    p.add_argument("--width", type=int, default=encoder.DEFAULT_WIDTH,
                   help="context mixing width in tokens")


def _add_trainer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=trainer.DEFAULT_LEARNING_RATE, help="learning rate")
    p.add_argument("--batch-size", type=int, default=trainer.DEFAULT_BATCH_SIZE)
    p.add_argument("--max-epochs", type=int, default=trainer.DEFAULT_MAX_EPOCHS)
    p.add_argument("--patience", type=int, default=trainer.DEFAULT_PATIENCE,
                   help="consecutive non-improving epochs before stopping")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nerkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file of defaults for this command")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("train", "train one model on a corpus")
    p.add_argument("--model", choices=["seq", "crf", "span"], required=True)
    p.add_argument("--train", required=True, help="training corpus path")
    p.add_argument("--val", required=True, help="validation corpus path")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument("--types", help="comma-separated entity types; inferred from gold if omitted")
    p.add_argument("--max-span-len", type=int, default=span_head.DEFAULT_MAX_SPAN_LEN)
    p.add_argument("--window", type=int, default=0,
                   help="context window size for samples that carry a doc field")
    _add_corpus_format(p)
    _add_encoder_flags(p)
    _add_trainer_flags(p)

    p = add("predict", "run a trained model over a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output prediction TSV")
    p.add_argument("--embeddings", help="read matrices from this embedding file instead of encoding")
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel inference threads")
    _add_corpus_format(p)

    p = add("combine", "combine prediction TSVs")
    p.add_argument("--mode", choices=["union", "majvote"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+", help="prediction TSV paths")

    p = add("meta-prepare", "build filter training data from two training runs")
    p.add_argument("--seq-run", required=True, help="run directory of the token model")
    p.add_argument("--span-run", required=True, help="run directory of the span model")
    p.add_argument("--train", required=True, help="original training corpus")
    p.add_argument("--val", required=True, help="validation corpus the runs predicted on")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--holdout", type=float, default=meta.DEFAULT_HOLDOUT_FRAC)
    _add_corpus_format(p)

    p = add("meta-train", "train the prediction filter")
    p.add_argument("--train", required=True, help="filter training JSONL")
    p.add_argument("--heldout", required=True, help="filter holdout JSONL")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument("--tau", type=float, default=meta.DEFAULT_THRESHOLD, help="decision threshold")
    _add_encoder_flags(p)
    _add_trainer_flags(p)

    p = add("meta-filter", "filter a prediction TSV with a trained filter")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pred", required=True, help="input prediction TSV")
    p.add_argument("--corpus", required=True, help="corpus the predictions refer to")
    p.add_argument("--out", required=True)
    _add_corpus_format(p)

    p = add("score", "strict micro precision/recall/F1")
    p.add_argument("--gold", required=True, help="gold TSV, or a corpus file to take gold from")
    p.add_argument("--pred", required=True, help="prediction TSV")
    p.add_argument("--per-type", action="store_true", help="also print a per-type breakdown")
    _add_corpus_format(p)

    p = add("synth", "generate a synthetic gazetteer corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--val", type=int, default=500)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--types", type=int, default=2, help="number of entity types")
    p.add_argument("--nested-frac", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0)

    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return values


def _inject_config(argv: list[str]) -> list[str]:
    """Splice config-file values in front of the CLI flags so flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv  # argparse will report the missing value
    injected: list[str] = []
    for key, value in _read_config_file(argv[idx + 1]).items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(flag)
        else:
            injected.extend([flag, value])
    return argv[:1] + injected + argv[1:]


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _write_resolved(args: argparse.Namespace, path: str) -> None:
    skip = {"config"}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# resolved configuration for: {args.command}\n")
        for key in sorted(vars(args)):
            if key in skip or key == "command":
                continue
            value = getattr(args, key)
            if isinstance(value, list):
                value = " ".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")


def _load_corpus(path: str, fmt: str, window: int = 0) -> list[corpus.Sample]:
    samples = corpus.load_samples(path, fmt)
    if window > 0:
        samples = [
            corpus.apply_window(s, s.text, window) if s.window is None else s for s in samples
        ]
    return samples


def _infer_tagset(args: argparse.Namespace, samples: list[corpus.Sample]) -> Tagset:
    if args.types:
        return Tagset(tuple(t.strip() for t in args.types.split(",") if t.strip()))
    types = sorted({m.entity_type for s in samples for m in s.gold})
    if not types:
        raise ConfigError("no gold entity types in the training corpus and --types not given")
    return Tagset(tuple(types))


def _train_config(args: argparse.Namespace) -> trainer.TrainConfig:
    try:
        return trainer.TrainConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            max_epochs=args.max_epochs,
            patience=args.patience,
            optimizer=args.optimizer,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _run_training(
    model: models.AnyModel,
    train_items,
    val_items,
    config: trainer.TrainConfig,
    out_dir: str,
    capture_predictions: bool,
) -> trainer.TrainResult:
    result = trainer.train(model, train_items, val_items, config)
    os.makedirs(os.path.join(out_dir, "epochs"), exist_ok=True)
    with open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for record, loss in zip(result.records, result.epoch_losses):
            fh.write(
                json.dumps(
                    {
                        "epoch": record.epoch,
                        "train_loss": loss,
                        "precision": record.precision,
                        "recall": record.recall,
                        "f1": record.f1,
                    }
                )
                + "\n"
            )
            print(
                f"epoch {record.epoch}: loss={loss:.6f} "
                f"P={record.precision:.4f} R={record.recall:.4f} F1={record.f1:.4f}"
            )
    if capture_predictions:
        for record in result.records:
            corpus.write_predictions(
                os.path.join(out_dir, "epochs", f"epoch_{record.epoch:03d}.tsv"),
                record.predictions,
            )
    models.save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), model)
    best = result.records[result.best_epoch - 1]
    summary = {
        "best_epoch": result.best_epoch,
        "best_f1": best.f1,
        "epochs_run": len(result.records),
    }
    if isinstance(model, models._EntityModelBase):
        summary["dropped_overlapping_gold"] = model.dropped_overlaps
        summary["unreachable_gold"] = model.unreachable_gold
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"best epoch {result.best_epoch}: F1={best.f1:.4f}")
    return result


def cmd_train(args: argparse.Namespace) -> int:
    train_samples = _load_corpus(args.train, args.format, args.window)
    val_samples = _load_corpus(args.val, args.format, args.window)
    tagset = _infer_tagset(args, train_samples)
    if args.model == "seq":
        model: models.EntityModel = models.SeqModel.build(
            tagset, args.dim, args.hash_size, args.width, args.seed
        )
    elif args.model == "crf":
        model = models.CrfModel.build(tagset, args.dim, args.hash_size, args.width, args.seed)
    else:
        model = models.SpanModel.build(
            tagset, args.dim, args.hash_size, args.width, args.max_span_len, args.seed
        )
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args, os.path.join(args.out, "config.resolved"))
    _run_training(model, train_samples, val_samples, _train_config(args), args.out, True)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    model = models.load_checkpoint(args.checkpoint)
    if isinstance(model, models.MetaModel):
        raise ConfigError("predict needs an entity model checkpoint; use meta-filter for the filter")
    samples = _load_corpus(args.corpus, args.format, args.window)
    matrices = None
    if args.embeddings:
        matrices = encoder.load_embedding_file(
            args.embeddings, {s.id: len(s.tokens) for s in samples}
        )

    def predict_one(sample: corpus.Sample) -> corpus.PredictionSet:
        emb = matrices[sample.id] if matrices is not None else None
        return model.predict(sample, emb)

    preds: corpus.PredictionSet = set()
    if args.jobs == 1:
        for s in samples:
            preds |= predict_one(s)
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for part in pool.map(predict_one, samples):
                preds |= part
    _ensure_parent(args.out)
    corpus.write_predictions(args.out, preds)
    _write_resolved(args, args.out + ".config")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_combine(args: argparse.Namespace) -> int:
    sets = [corpus.read_predictions(p) for p in args.inputs]
    combined = combiners.union(sets) if args.mode == "union" else combiners.majority_vote(sets)
    _ensure_parent(args.out)
    corpus.write_predictions(args.out, combined)
    _write_resolved(args, args.out + ".config")
    print(f"wrote {len(combined)} predictions to {args.out}")
    return 0


def _read_epoch_predictions(run_dir: str) -> list[frozenset[corpus.Mention]]:
    paths = sorted(glob.glob(os.path.join(run_dir, "epochs", "epoch_*.tsv")))
    if not paths:
        raise ConfigError(f"no epoch predictions under {run_dir!r}; was it trained with this tool?")
    return [frozenset(corpus.read_predictions(p)) for p in paths]


def cmd_meta_prepare(args: argparse.Namespace) -> int:
    if not (0.0 <= args.holdout < 1.0):
        raise ConfigError("--holdout must lie in [0, 1)")
    train_samples = _load_corpus(args.train, args.format)
    val_samples = _load_corpus(args.val, args.format)
    train_set, heldout = meta.build_training_set(
        _read_epoch_predictions(args.seq_run),
        _read_epoch_predictions(args.span_run),
        train_samples,
        val_samples,
        holdout_frac=args.holdout,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    meta.write_meta_examples(os.path.join(args.out, "train.jsonl"), train_set)
    meta.write_meta_examples(os.path.join(args.out, "heldout.jsonl"), heldout)
    _write_resolved(args, os.path.join(args.out, "config.resolved"))
    print(f"wrote {len(train_set)} training and {len(heldout)} holdout examples to {args.out}")
    return 0


def cmd_meta_train(args: argparse.Namespace) -> int:
    if not (0.0 <= args.tau <= 1.0):
        raise ConfigError("--tau must lie in [0, 1]")
    train_examples = meta.read_meta_examples(args.train)
    heldout_examples = meta.read_meta_examples(args.heldout)
    model = models.MetaModel.build(args.dim, args.hash_size, args.width, args.tau, args.seed)
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(args, os.path.join(args.out, "config.resolved"))
    _run_training(model, train_examples, heldout_examples, _train_config(args), args.out, False)
    return 0


def cmd_meta_filter(args: argparse.Namespace) -> int:
    model = models.load_checkpoint(args.checkpoint)
    if not isinstance(model, models.MetaModel):
        raise ConfigError(f"{args.checkpoint} is not a filter checkpoint")
    preds = corpus.read_predictions(args.pred)
    samples = {s.id: s for s in _load_corpus(args.corpus, args.format)}
    kept = meta.meta_filter(preds, model.params, samples)
    _ensure_parent(args.out)
    corpus.write_predictions(args.out, kept)
    _write_resolved(args, args.out + ".config")
    print(f"kept {len(kept)} of {len(preds)} predictions")
    return 0


def _load_gold(path: str, fmt: str) -> corpus.PredictionSet:
    if path.endswith(".tsv"):
        return corpus.read_predictions(path)
    gold: corpus.PredictionSet = set()
    for s in corpus.load_samples(path, fmt):
        gold |= s.gold
    return gold


def cmd_score(args: argparse.Namespace) -> int:
    gold = _load_gold(args.gold, args.format)
    pred = corpus.read_predictions(args.pred)
    print(scorer.format_report(scorer.score(gold, pred)))
    if args.per_type:
        for etype, m in scorer.score_per_type(gold, pred).items():
            print(f"{etype}: {scorer.format_report(m)}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        config = synth.SynthConfig(
            n_train=args.train,
            n_val=args.val,
            n_test=args.test,
            n_types=args.types,
            nested_frac=args.nested_frac,
            noise=args.noise,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    splits = synth.generate(config)
    os.makedirs(args.out, exist_ok=True)
    for name, samples in splits.items():
        corpus.write_samples(os.path.join(args.out, f"{name}.jsonl"), samples)
    _write_resolved(args, os.path.join(args.out, "config.resolved"))
    print(f"wrote {', '.join(f'{len(v)} {k}' for k, v in splits.items())} samples to {args.out}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "combine": cmd_combine,
    "meta-prepare": cmd_meta_prepare,
    "meta-train": cmd_meta_train,
    "meta-filter": cmd_meta_filter,
    "score": cmd_score,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NerkitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
