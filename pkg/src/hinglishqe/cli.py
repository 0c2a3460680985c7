"""Command line interface: train / evaluate / predict / data-stats.

Option precedence is flags > config file (key=value lines) > built-in
defaults; the fully resolved configuration is echoed into the run manifest
so any run can be replayed exactly. Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical abort.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import TASK_AVERAGE_RATING, TASK_DISAGREEMENT, __version__
from .corpus import DatasetSplit, Example, load_examples, parse_text_rows
from .errors import ConfigError, DataError, HinglishQEError, NumericalError
from .metrics import (F1_AVERAGING_MODES, f1_score, format_report_lines,
                      format_report_table, label_to_value,
                      report_from_predictions)
from .model import load_checkpoint, save_checkpoint
from .seeding import substream
from .textprep import (EmbeddingSet, build_vocabs, encode_example,
                       load_embeddings, random_table, tokenize)
from .training import TrainConfig, predict, train, write_history

log = logging.getLogger(__name__)

TASK_FLAGS = {"avg-rating": TASK_AVERAGE_RATING, "disagreement": TASK_DISAGREEMENT}

# every tunable option and its config-file type; path options default to None
_OPTION_TYPES = {
    "task": str, "train": str, "val": str, "test": str, "input": str,
    "emb_en": str, "emb_hi": str, "checkpoint": str, "out": str,
    "dim": int, "hidden": int, "hidden2": int, "dense": int, "max_len": int,
    "batch_size": int, "epochs": int, "lr": float, "seed": int,
    "min_count": int, "clip_norm": float, "patience": int,
    "f1_averaging": str, "raw_ratings": bool, "no_header": bool,
}
_OPTION_DEFAULTS = {
    "task": "avg-rating", "train": None, "val": None, "test": None,
    "input": None, "emb_en": None, "emb_hi": None, "checkpoint": None,
    "out": None, "dim": 100, "hidden": 64, "hidden2": 64, "dense": 64,
    "max_len": 30, "batch_size": 32, "epochs": 30, "lr": 0.001, "seed": 0,
    "min_count": 1, "clip_norm": 5.0, "patience": 5,
    "f1_averaging": "weighted", "raw_ratings": False, "no_header": False,
}


def _add_options(parser):
    parser.add_argument("--config", help="key=value config file (flags override it)")
    parser.add_argument("--task", choices=sorted(TASK_FLAGS))
    for flag in ("--train", "--val", "--test", "--input", "--emb-en", "--emb-hi",
                 "--checkpoint", "--out"):
        parser.add_argument(flag)
    for flag in ("--dim", "--hidden", "--hidden2", "--dense", "--max-len",
                 "--batch-size", "--epochs", "--seed", "--min-count", "--patience"):
        parser.add_argument(flag, type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--clip-norm", type=float)
    parser.add_argument("--f1-averaging", choices=F1_AVERAGING_MODES)
    parser.add_argument("--raw-ratings", action="store_const", const=True)
    parser.add_argument("--no-header", action="store_const", const=True)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hinglishqe",
        description="Train and evaluate quality/disagreement predictors for "
                    "code-mixed Hinglish sentences.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("train", "train a model and write checkpoint, history and manifest"),
            ("evaluate", "score a checkpoint against a labeled file"),
            ("predict", "write task-scale predictions for an unlabeled file"),
            ("data-stats", "summarize a corpus file")):
        _add_options(sub.add_parser(name, help=help_text))
    return parser


def _coerce(key: str, raw: str):
    kind = _OPTION_TYPES[key]
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes"):
            return True
        if lowered in ("0", "false", "no"):
            return False
        raise ConfigError(f"config value {key}={raw!r} is not a boolean")
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"config value {key}={raw!r} is not a {kind.__name__}") from None


def _parse_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for line_num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{line_num}: expected key=value")
        if key not in _OPTION_TYPES:
            raise ConfigError(f"{path}:{line_num}: unknown option {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_options(args):
    """Merge defaults, config file and explicit flags; returns (resolved, explicit)."""
    explicit = {key: getattr(args, key) for key in _OPTION_TYPES
                if getattr(args, key, None) is not None}
    resolved = dict(_OPTION_DEFAULTS)
    if args.config:
        resolved.update(_parse_config_file(args.config))
    resolved.update(explicit)
    if resolved["task"] not in TASK_FLAGS:
        raise ConfigError(f"unknown task {resolved['task']!r}")
    return resolved, explicit


def _require(resolved, key, command):
    if not resolved.get(key):
        raise ConfigError(f"{command} requires --{key.replace('_', '-')}")
    return resolved[key]


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _train_config(resolved) -> TrainConfig:
    config = TrainConfig(
        task=TASK_FLAGS[resolved["task"]],
        batch_size=resolved["batch_size"], epochs=resolved["epochs"],
        learning_rate=resolved["lr"], seed=resolved["seed"],
        clip_norm=resolved["clip_norm"], early_stop_patience=resolved["patience"],
        embedding_dim=resolved["dim"], hidden=resolved["hidden"],
        hidden2=resolved["hidden2"], dense=resolved["dense"],
        max_len=resolved["max_len"], min_count=resolved["min_count"])
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def build_pipeline(train_examples, *, min_count, dim, emb_en, emb_hi, seed):
    """Vocabularies from the training texts plus the two embedding tables."""
    vocabs = build_vocabs(train_examples, min_count)
    tables = {}
    for name, path, vocab in (("english", emb_en, vocabs.english),
                              ("hindi", emb_hi, vocabs.hindi)):
        rng = substream(seed, f"embedding-fallback-{name}")
        if path:
            tables[name] = load_embeddings(path, vocab, dim, rng)
        else:
            log.warning("no %s embedding file given; using seeded random vectors", name)
            tables[name] = random_table(vocab, dim, rng)
    return vocabs, EmbeddingSet(english=tables["english"], hindi=tables["hindi"])


def _embedding_digest(path) -> str:
    return _sha256_file(path) if path else "none"


def _checkpoint_meta(config: TrainConfig, vocabs, resolved, epochs_trained: int) -> dict:
    return {
        "task": config.task,
        "seed": str(config.seed),
        "min_count": str(config.min_count),
        "epochs_trained": str(epochs_trained),
        "tool_version": __version__,
        "vocab_english_sha256": vocabs.english.sha256(),
        "vocab_hindi_sha256": vocabs.hindi.sha256(),
        "vocab_hinglish_sha256": vocabs.hinglish.sha256(),
        "vocab_english_size": str(len(vocabs.english)),
        "vocab_hindi_size": str(len(vocabs.hindi)),
        "vocab_hinglish_size": str(len(vocabs.hinglish)),
        "emb_english_sha256": _embedding_digest(resolved["emb_en"]),
        "emb_hindi_sha256": _embedding_digest(resolved["emb_hi"]),
    }


def cmd_train(args) -> int:
    resolved, _ = resolve_options(args)
    config = _train_config(resolved)
    train_path = _require(resolved, "train", "train")
    has_header = not resolved["no_header"]

    out_dir = Path(resolved["out"] or "run")
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = Path(resolved["checkpoint"] or out_dir / "checkpoint.ckpt")
    history_path = out_dir / "history.csv"
    manifest_path = out_dir / "manifest.json"

    train_examples = load_examples(train_path, has_header=has_header,
                                   raw_ratings=resolved["raw_ratings"])
    val_examples = []
    if resolved["val"]:
        val_examples = load_examples(resolved["val"], has_header=has_header,
                                     raw_ratings=resolved["raw_ratings"])
        if not val_examples:
            log.warning("validation file %s is empty", resolved["val"])
    else:
        log.warning("no --val file given; training without early stopping")
    split = DatasetSplit(train=train_examples, validation=val_examples, test=[])

    for path in (resolved["emb_en"], resolved["emb_hi"]):
        if path and not Path(path).exists():
            raise DataError(f"embedding file not found: {path}")

    vocabs, embeddings = build_pipeline(
        split.train, min_count=config.min_count, dim=config.embedding_dim,
        emb_en=resolved["emb_en"], emb_hi=resolved["emb_hi"], seed=config.seed)

    inputs = {"train": train_path}
    if resolved["val"]:
        inputs["val"] = resolved["val"]
    for key in ("emb_en", "emb_hi"):
        if resolved[key]:
            inputs[key] = resolved[key]
    manifest = {
        "command": "train",
        "tool_version": __version__,
        "seed": config.seed,
        "config": {k: resolved[k] for k in sorted(_OPTION_DEFAULTS)},
        "inputs": {name: {"path": str(path), "sha256": _sha256_file(path)}
                   for name, path in inputs.items()},
        "outputs": {"checkpoint": str(checkpoint_path),
                    "history": str(history_path),
                    "manifest": str(manifest_path)},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")

    params, history = train(config, split, vocabs, embeddings)
    save_checkpoint(params, _checkpoint_meta(config, vocabs, resolved, len(history)),
                    checkpoint_path)
    write_history(history, history_path)
    print(f"checkpoint written to {checkpoint_path}")
    print(f"history written to {history_path}")
    print(f"manifest written to {manifest_path}")
    return 0


def _load_pipeline_for_checkpoint(resolved, explicit, command):
    """Rebuild the encoding pipeline and verify it matches the checkpoint."""
    checkpoint_path = _require(resolved, "checkpoint", command)
    params, meta = load_checkpoint(checkpoint_path)
    cfg = params.config

    for flag, attr in (("dim", "embedding_dim"), ("hidden", "hidden"),
                       ("hidden2", "hidden2"), ("dense", "dense"),
                       ("max_len", "max_len")):
        if flag in explicit and explicit[flag] != getattr(cfg, attr):
            raise ConfigError(
                f"checkpoint {attr}={getattr(cfg, attr)} does not match "
                f"--{flag.replace('_', '-')} {explicit[flag]}")
    if "task" in explicit and TASK_FLAGS[explicit["task"]] != meta.get("task"):
        raise ConfigError(f"checkpoint task={meta.get('task')} does not match "
                          f"--task {explicit['task']}")

    for key, meta_key in (("emb_en", "emb_english_sha256"),
                          ("emb_hi", "emb_hindi_sha256")):
        if meta_key not in meta:
            continue
        path = resolved[key]
        if path and not Path(path).exists():
            raise DataError(f"embedding file not found: {path}")
        if _embedding_digest(path) != meta[meta_key]:
            raise ConfigError(
                f"--{key.replace('_', '-')} does not match the file the checkpoint "
                f"was trained with (digest {meta[meta_key][:12]})")

    train_path = _require(resolved, "train", command)
    train_examples = load_examples(train_path, has_header=not resolved["no_header"],
                                   raw_ratings=resolved["raw_ratings"])
    vocabs, embeddings = build_pipeline(
        train_examples, min_count=int(meta.get("min_count", resolved["min_count"])),
        dim=cfg.embedding_dim, emb_en=resolved["emb_en"], emb_hi=resolved["emb_hi"],
        seed=int(meta.get("seed", resolved["seed"])))

    for stream, vocab in (("english", vocabs.english), ("hindi", vocabs.hindi),
                          ("hinglish", vocabs.hinglish)):
        key = f"vocab_{stream}_sha256"
        if key in meta and meta[key] != vocab.sha256():
            raise ConfigError(
                f"{stream} vocabulary hash mismatch: checkpoint {meta[key][:12]}... "
                f"vs rebuilt {vocab.sha256()[:12]}... (different --train file?)")
    return params, meta, vocabs, embeddings


def cmd_evaluate(args) -> int:
    resolved, explicit = resolve_options(args)
    params, meta, vocabs, embeddings = _load_pipeline_for_checkpoint(
        resolved, explicit, "evaluate")
    task = meta["task"]

    test_path = _require(resolved, "test", "evaluate")
    examples = load_examples(test_path, has_header=not resolved["no_header"],
                             raw_ratings=resolved["raw_ratings"])
    if not examples:
        raise DataError(f"no rows to evaluate in {test_path}")

    encoded = [encode_example(e, task, vocabs, embeddings, params.config.max_len)
               for e in examples]
    preds = predict(params, encoded)
    gold = [enc.label for enc in encoded]
    report = report_from_predictions(preds, gold, task, resolved["f1_averaging"])

    print(format_report_table(report, task, title=f"evaluation of {test_path}"))
    lines = format_report_lines(report)
    other = {"weighted": "macro", "macro": "weighted"}[resolved["f1_averaging"]]
    lines += f"\nf1_{other}={f1_score(preds, gold, other):.17g}"
    print(lines)
    if resolved["out"]:
        Path(resolved["out"]).write_text(lines + "\n", encoding="utf-8")
        print(f"report written to {resolved['out']}")
    return 0


def cmd_predict(args) -> int:
    resolved, explicit = resolve_options(args)
    params, meta, vocabs, embeddings = _load_pipeline_for_checkpoint(
        resolved, explicit, "predict")
    task = meta["task"]

    input_path = _require(resolved, "input", "predict")
    out_path = Path(_require(resolved, "out", "predict"))
    rows = parse_text_rows(input_path, has_header=not resolved["no_header"])
    if not rows:
        log.warning("input file %s has no rows; writing empty output", input_path)
        out_path.write_text("", encoding="utf-8")
        return 0

    encoded = [encode_example(Example(e, h, x, 0, 0), task, vocabs, embeddings,
                              params.config.max_len) for e, h, x in rows]
    values = [label_to_value(p, task) for p in predict(params, encoded)]
    out_path.write_text("\n".join(str(v) for v in values) + "\n", encoding="utf-8")
    print(f"{len(values)} predictions written to {out_path}")
    return 0


def _percentile_line(name, counts) -> str:
    arr = np.asarray(counts)
    pcts = {f"p{p}": int(np.percentile(arr, p)) for p in (50, 90, 95, 99)}
    parts = " ".join(f"{k}={v}" for k, v in pcts.items())
    return f"token_percentiles_{name}: {parts} max={int(arr.max())}"


def cmd_data_stats(args) -> int:
    resolved, _ = resolve_options(args)
    path = resolved["train"] or resolved["test"] or resolved["val"]
    if not path:
        raise ConfigError("data-stats requires --train (or --val/--test)")
    examples = load_examples(path, has_header=not resolved["no_header"],
                             raw_ratings=resolved["raw_ratings"])
    print(f"file={path}")
    print(f"rows={len(examples)}")
    if not examples:
        return 0

    for task, getter, offset in (
            ("average_rating", lambda e: e.avg_rating_label, 1),
            ("disagreement", lambda e: e.disagreement_label, 0)):
        histogram = {}
        for e in examples:
            value = getter(e) + offset
            histogram[value] = histogram.get(value, 0) + 1
        body = " ".join(f"{v}={histogram[v]}" for v in sorted(histogram))
        print(f"label_histogram_{task}: {body}")

    for name, getter in (("english", lambda e: e.english),
                         ("hindi", lambda e: e.hindi),
                         ("hinglish", lambda e: e.hinglish)):
        print(_percentile_line(name, [len(tokenize(getter(e))) for e in examples]))

    vocabs = build_vocabs(examples, resolved["min_count"])
    print(f"vocab_sizes(min_count={resolved['min_count']}): "
          f"english={len(vocabs.english)} hindi={len(vocabs.hindi)} "
          f"hinglish={len(vocabs.hinglish)}")
    return 0


_COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate,
             "predict": cmd_predict, "data-stats": cmd_data_stats}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except HinglishQEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
