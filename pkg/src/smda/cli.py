"""Command-line entry point: ``smda <command> [options]``.

Commands: synth, ingest, augment, train, train-all, eval, predict.

Training settings come from a flat YAML/JSON key-value file whose keys are
``TrainConfig`` field names plus the run keys ``data`` and ``out``. Precedence,
lowest to highest: ``TrainConfig`` defaults, config file, command-line flags.
Relative paths are taken relative to the working directory.

Every command writes a ``<command>.manifest.json`` next to its outputs before
producing anything else. Exit status: 0 on success, 1 on a pipeline error
(message prefixed with the failing module), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from . import __version__
from .augment import ParaphraseProvider, balance_minority, load_lexicon, load_paraphrase_table, pair_unlabeled
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import SUPPORT_TASKS, TASKS, SplitSpec, encode_examples, load_corpus, save_examples, split, write_records
from .errors import SMDAError
from .metrics import Metrics
from .pipeline import corpus_vocab, load_data_dir, run_task
from .synth import SynthConfig, config_record, synth
from .trainer import TrainConfig, evaluate, predict_file, write_jsonl

RUN_KEYS = ("data", "out")


class CLIError(SMDAError):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str]
    outputs: dict[str, str]
    seed: int | None
    version: str = __version__
    argv: list[str] = field(default_factory=list)

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def manifest_path(out: Path, command: str, is_dir: bool = True) -> Path:
    return out / f"{command}.manifest.json" if is_dir else out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------- config


def load_settings(path: str | None) -> dict:
    """Read a flat key-value config file; an absent path gives an empty mapping."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"config file {p} does not exist")
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise CLIError(f"config file {p}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise CLIError(f"config file {p}: expected a key-value mapping, got {type(doc).__name__}")
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise CLIError(f"config file {p}: nested sections are not supported ({nested})")
    return doc


def resolve_settings(config_path: str | None, overrides: dict) -> tuple[TrainConfig, dict]:
    """Merge file and flag values; returns the train config and the run keys."""
    settings = load_settings(config_path)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    run = {k: settings.pop(k, None) for k in RUN_KEYS}
    return TrainConfig.from_dict(settings), run


def _require_dir(path: str | None, what: str) -> Path:
    if path is None:
        raise CLIError(f"no {what} given (flag or config key)")
    p = Path(path)
    if not p.is_dir():
        raise CLIError(f"{what} {p} is not a directory")
    return p


def _require_file(path: str | None, what: str) -> Path:
    if path is None:
        raise CLIError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"{what} {p} does not exist")
    return p


# ---------------------------------------------------------------- tables


def format_table(rows: Sequence[tuple[str, Metrics]]) -> str:
    lines = ["task\tacc\tf1"]
    lines += [f"{task}\t{m.accuracy:.4f}\t{m.macro_f1:.4f}" for task, m in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_labeled=args.labeled,
        n_unlabeled=args.unlabeled,
        n_test=args.test,
        n_dev=args.dev,
        seed=args.seed,
        noise=args.noise,
        pool_size=args.pool_size,
    )
    out = Path(args.out)
    files = ("train", "dev", "test", "unlabeled", "paraphrases")
    outputs = {name: str(out / f"{name}.jsonl") for name in files} | {"lexicon": str(out / "lexicon.tsv")}
    RunManifest("synth", config_record(cfg), {}, outputs, cfg.seed, argv=args.argv).write(manifest_path(out, "synth"))
    try:
        counts = synth(cfg, out)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_ingest(args) -> int:
    labeled_path = _require_file(args.labeled, "labeled file")
    unlabeled_path = _require_file(args.unlabeled, "unlabeled file") if args.unlabeled else None
    dev_f, test_f = args.dev_fraction, args.test_fraction
    spec = SplitSpec(seed=args.seed, fractions=(1.0 - dev_f - test_f, dev_f, test_f), stratify=args.stratify)
    out = Path(args.out)
    config = {"seed": args.seed, "fractions": list(spec.fractions), "stratify": args.stratify, "min_freq": args.min_freq}
    inputs = {"labeled": str(labeled_path)} | ({"unlabeled": str(unlabeled_path)} if unlabeled_path else {})
    outputs = {name: str(out / f"{name}.jsonl") for name in ("train", "dev", "test", "unlabeled")} | {"vocab": str(out / "vocab.tsv")}
    RunManifest("ingest", config, inputs, outputs, args.seed, argv=args.argv).write(manifest_path(out, "ingest"))

    labeled = load_corpus(labeled_path, "labeled")
    unlabeled = load_corpus(unlabeled_path, "unlabeled") if unlabeled_path else []
    train, dev, test = split(labeled, spec)
    vocab = corpus_vocab(train, unlabeled, args.min_freq)
    for name, part in (("train", train), ("dev", dev), ("test", test), ("unlabeled", unlabeled)):
        save_examples(out / f"{name}.jsonl", part)
    vocab.save(out / "vocab.tsv")
    print(f"train={len(train)} dev={len(dev)} test={len(test)} unlabeled={len(unlabeled)} vocab={len(vocab)}")
    return 0


def cmd_augment(args) -> int:
    src = _require_dir(args.input, "data directory")
    out = Path(args.out) if args.out else src
    if args.provider == "file" and not args.paraphrases:
        raise CLIError("--provider file needs --paraphrases")
    config = {
        "provider": args.provider,
        "paraphrases": args.paraphrases,
        "lexicon": args.lexicon,
        "k": args.k,
        "tasks": list(args.tasks),
        "seed": args.seed,
        "swap_prob": args.swap_prob,
        "drop_prob": args.drop_prob,
        "synonym_prob": args.synonym_prob,
    }
    outputs = {"train_balanced": str(out / "train_balanced.jsonl"), "pairs": str(out / "pairs.jsonl")}
    RunManifest("augment", config, {"data": str(src)}, outputs, args.seed, argv=args.argv).write(manifest_path(out, "augment"))

    provider = ParaphraseProvider(
        mode=args.provider,
        table=load_paraphrase_table(args.paraphrases) if args.paraphrases else None,
        lexicon=load_lexicon(args.lexicon) if args.lexicon else {},
        swap_prob=args.swap_prob,
        drop_prob=args.drop_prob,
        synonym_prob=args.synonym_prob,
        seed=args.seed,
    )
    train = load_corpus(src / "train.jsonl", "labeled")
    unl_file = src / "unlabeled.jsonl"
    unlabeled = load_corpus(unl_file, "unlabeled") if unl_file.exists() else []
    balanced = balance_minority(train, args.tasks, provider, args.k)
    pairs = pair_unlabeled(unlabeled, provider)
    save_examples(out / "train_balanced.jsonl", balanced)
    write_records(out / "pairs.jsonl", (p.record() for p in pairs))
    print(f"train={len(train)} balanced={len(balanced)} pairs={len(pairs)}")
    return 0


def _train_one(config: TrainConfig, data_path: str, out: Path, predict: bool) -> tuple[str, Metrics | None]:
    """Train one task into ``out``; shared by ``train`` and ``train-all``."""
    data = load_data_dir(data_path, config.min_freq)
    params, state, test = run_task(data, config)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint", Checkpoint(params, data.vocab, config.task, state.best_epoch, config.max_len, config.to_dict()))
    write_jsonl(out / "history.jsonl", state.epochs)
    write_jsonl(out / "steps.jsonl", state.steps)
    if test is not None:
        (out / "metrics.tsv").write_text(format_table([(config.task, test)]), encoding="utf-8")
    if predict:
        predict_file(params, data.vocab, config.max_len, Path(data_path) / "test.jsonl", out / "predictions.jsonl", config.task)
    return config.task, test


def _train_overrides(args) -> dict:
    return {
        "task": getattr(args, "task", None),
        "seed": args.seed,
        "batch_size": args.batch_size,
        "T": args.temperature,
        "gamma0": args.gamma0,
        "epochs": args.epochs,
        "data": args.data,
        "out": args.out,
    }


def cmd_train(args) -> int:
    config, run = resolve_settings(args.config, _train_overrides(args))
    data = _require_dir(run["data"], "data directory")
    out = Path(run["out"] or "runs") / config.task
    outputs = {"checkpoint": str(out / "checkpoint"), "history": str(out / "history.jsonl"), "steps": str(out / "steps.jsonl")}
    manifest = RunManifest("train", config.to_dict() | {"data": str(data), "out": str(out)}, {"data": str(data), "config": args.config}, outputs, config.seed, argv=args.argv)
    manifest.write(manifest_path(out, "train"))
    task, test = _train_one(config, str(data), out, predict=False)
    if test is not None:
        sys.stdout.write(format_table([(task, test)]))
    return 0


def cmd_train_all(args) -> int:
    base, run = resolve_settings(args.config, _train_overrides(args))
    data = _require_dir(run["data"], "data directory")
    if not (data / "test.jsonl").is_file():
        raise CLIError(f"{data} has no test.jsonl to report on")
    out = Path(run["out"] or "runs")
    outputs = {"metrics": str(out / "metrics.tsv")} | {t: str(out / t) for t in TASKS}
    resolved = base.to_dict() | {"task": None, "data": str(data), "out": str(out)}
    RunManifest("train-all", resolved, {"data": str(data), "config": args.config}, outputs, base.seed, argv=args.argv).write(manifest_path(out, "train-all"))

    configs = [TrainConfig.from_dict(base.to_dict() | {"task": t}) for t in TASKS]
    jobs = [(c, str(data), out / c.task, True) for c in configs]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_train_one, *zip(*jobs)))
    else:
        results = [_train_one(*job) for job in jobs]
    table = format_table(results)
    (out / "metrics.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _eval_examples(path: Path) -> list:
    return load_corpus(path / "test.jsonl" if path.is_dir() else path, "labeled")


def cmd_eval(args) -> int:
    ckpt_dir = _require_dir(args.checkpoint, "checkpoint")
    data = Path(args.data)
    if not data.exists():
        raise CLIError(f"data {data} does not exist")
    if args.out:
        out = Path(args.out)
        inputs = {"checkpoint": str(ckpt_dir), "data": str(data)}
        RunManifest("eval", {}, inputs, {"table": str(out)}, None, argv=args.argv).write(manifest_path(out, "eval", is_dir=False))
    ckpt = load_checkpoint(ckpt_dir)
    task = args.task or ckpt.task
    examples = encode_examples(_eval_examples(data), ckpt.vocab, ckpt.max_len)
    table = format_table([(task, evaluate(ckpt.params, examples, task))])
    if args.out:
        out.write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_predict(args) -> int:
    ckpt_dir = _require_dir(args.checkpoint, "checkpoint")
    in_path = _require_file(args.input, "input file")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    inputs = {"checkpoint": str(ckpt_dir), "in": str(in_path)}
    RunManifest("predict", {}, inputs, {"predictions": str(out)}, None, argv=args.argv).write(manifest_path(out, "predict", is_dir=False))
    ckpt = load_checkpoint(ckpt_dir)
    n = predict_file(ckpt.params, ckpt.vocab, ckpt.max_len, in_path, out, ckpt.task)
    print(f"wrote {n} predictions to {out}")
    return 0


# ---------------------------------------------------------------- parser


def _task_list(value: str) -> list[str]:
    tasks = [t for t in value.split(",") if t]
    bad = [t for t in tasks if t not in TASKS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown tasks {bad}; choose from {', '.join(TASKS)}")
    return tasks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smda", description="Semi-supervised text classification with paraphrase consistency.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--labeled", type=int, default=100)
    p.add_argument("--unlabeled", type=int, default=2000)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--dev", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--pool-size", type=int, default=SynthConfig.pool_size, help="keywords per class")
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="split a labeled file and build the vocabulary")
    p.add_argument("--labeled", required=True)
    p.add_argument("--unlabeled")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dev-fraction", type=float, default=0.1)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--stratify", choices=TASKS)
    p.add_argument("--min-freq", type=int, default=2)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("augment", help="balance minority classes and pair unlabeled sentences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="output directory (default: the input directory)")
    p.add_argument("--provider", choices=("file", "rule"), default="rule")
    p.add_argument("--paraphrases")
    p.add_argument("--lexicon")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--tasks", type=_task_list, default=list(SUPPORT_TASKS), help="comma-separated task names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--swap-prob", type=float, default=TrainConfig.swap_prob)
    p.add_argument("--drop-prob", type=float, default=TrainConfig.drop_prob)
    p.add_argument("--synonym-prob", type=float, default=TrainConfig.synonym_prob)
    p.set_defaults(func=cmd_augment)

    for name, func in (("train", cmd_train), ("train-all", cmd_train_all)):
        p = sub.add_parser(name, help="train one task" if name == "train" else "train all six tasks")
        if name == "train":
            p.add_argument("--task", choices=TASKS)
        else:
            p.add_argument("--workers", type=int, default=1, help="tasks trained in parallel")
        p.add_argument("--config")
        p.add_argument("--data")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--gamma0", type=float)
        p.add_argument("--epochs", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="labeled record file or data directory (uses test.jsonl)")
    p.add_argument("--task", choices=TASKS, help="default: the checkpoint's task")
    p.add_argument("--out", help="also write the table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label an unlabeled record file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except SMDAError as exc:
        print(f"smda: error [{exc.module}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"smda: error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
