"""Data-directory conventions shared by the CLI and the experiment harness.

A prepared data directory holds ``train.jsonl``, ``dev.jsonl``,
``test.jsonl`` (labeled records), ``unlabeled.jsonl``, and optionally
``vocab.tsv``, ``train_balanced.jsonl`` and ``pairs.jsonl`` written by the
``augment`` command. ``paraphrases.jsonl``/``lexicon.tsv`` are picked up when
the config names them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .augment import load_pairs
from .corpus import Corpus, Example, Vocab, build_vocab, encode_examples, load_corpus
from .errors import SMDAError
from .metrics import Metrics
from .model import ParamSet
from .trainer import TrainConfig, TrainData, TrainState, evaluate, prepare_data, train


class PipelineError(SMDAError):
    pass


@dataclass
class DataDir:
    path: Path
    train: list[Example]
    dev: list[Example]
    test: list[Example]
    unlabeled: list[Example]
    vocab: Vocab


def corpus_vocab(train, unlabeled, min_freq: int) -> Vocab:
    """Vocabulary over labeled-train and unlabeled text; dev/test never contribute."""
    return build_vocab(list(train) + list(unlabeled), min_freq)


def load_data_dir(path: str | Path, min_freq: int = 2) -> DataDir:
    path = Path(path)
    if not path.is_dir():
        raise PipelineError(f"data directory {path} does not exist")

    def opt(name: str, kind: str) -> list[Example]:
        f = path / name
        return load_corpus(f, kind) if f.exists() else []

    train = load_corpus(path / "train.jsonl", "labeled")
    unlabeled = opt("unlabeled.jsonl", "unlabeled")
    vocab_file = path / "vocab.tsv"
    vocab = Vocab.load(vocab_file, min_freq) if vocab_file.exists() else corpus_vocab(train, unlabeled, min_freq)
    Corpus(tuple(train), tuple(unlabeled), vocab)
    return DataDir(path, train, opt("dev.jsonl", "labeled"), opt("test.jsonl", "labeled"), unlabeled, vocab)


def prepare_from_dir(data: DataDir, config: TrainConfig) -> TrainData:
    balanced_file, pairs_file = data.path / "train_balanced.jsonl", data.path / "pairs.jsonl"
    if balanced_file.exists():
        train_set, balanced = load_corpus(balanced_file, "labeled"), True
    else:
        train_set, balanced = data.train, False
    unlabeled = load_pairs(pairs_file) if pairs_file.exists() else data.unlabeled
    return prepare_data(train_set, data.dev, unlabeled, data.vocab, config, balanced=balanced)


def run_task(data: DataDir, config: TrainConfig) -> tuple[ParamSet, TrainState, Metrics | None]:
    prepared = prepare_from_dir(data, config)
    params, state = train(prepared, config)
    test = encode_examples(data.test, data.vocab, config.max_len)
    return params, state, (evaluate(params, test, config.task) if test else None)
