"""Sentence records, tokenization, vocabulary, and train/dev/test splits."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import SMDAError

TASKS: tuple[str, ...] = (
    "Emotional_disclosure",
    "Information_disclosure",
    "Support",
    "General_support",
    "Information_support",
    "Emotional_support",
)
SUPPORT_TASKS: tuple[str, ...] = ("General_support", "Information_support", "Emotional_support")

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
DEFAULT_MAX_LEN = 64

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(SMDAError):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    text: str
    tokens: tuple[str, ...] = ()
    ids: tuple[int, ...] = ()
    labels: Mapping[str, int] | None = None

    def label(self, task: str) -> int:
        if self.labels is None:
            raise CorpusError(f"example {self.id!r} has no labels")
        return self.labels[task]


@dataclass(frozen=True)
class Vocab:
    index: Mapping[str, int]
    min_freq: int = 2

    def __len__(self) -> int:
        return len(self.index)

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        lines = [f"{tok}\t{idx}" for tok, idx in sorted(self.index.items(), key=lambda kv: kv[1])]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, min_freq: int = 2) -> "Vocab":
        index: dict[str, int] = {}
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            try:
                tok, idx = line.split("\t")
                index[tok] = int(idx)
            except ValueError:
                raise CorpusError(f"{path}: malformed vocab line {n}") from None
        if index.get(PAD) != PAD_ID or index.get(UNK) != UNK_ID:
            raise CorpusError(f"{path}: vocab must map {PAD}->0 and {UNK}->1")
        if sorted(index.values()) != list(range(len(index))):
            raise CorpusError(f"{path}: vocab indices must be contiguous from 0")
        return cls(index, min_freq)


@dataclass(frozen=True)
class Corpus:
    labeled: tuple[Example, ...]
    unlabeled: tuple[Example, ...]
    vocab: Vocab

    def __post_init__(self):
        overlap = {e.id for e in self.labeled} & {e.id for e in self.unlabeled}
        if overlap:
            raise CorpusError(f"labeled and unlabeled share ids: {sorted(overlap)[:5]}")


@dataclass(frozen=True)
class SplitSpec:
    """Either absolute ``sizes`` or ``fractions`` for (train, dev, test).

    With fractions, dev and test sizes are floored and train takes the rest.
    ``stratify`` names a task whose 0/1 label is kept proportional across parts.
    """

    seed: int = 0
    sizes: tuple[int, int, int] | None = None
    fractions: tuple[float, float, float] | None = None
    stratify: str | None = None

    def resolve(self, n: int) -> tuple[int, int, int]:
        if (self.sizes is None) == (self.fractions is None):
            raise CorpusError("split: give exactly one of sizes or fractions")
        if self.sizes is not None:
            sizes = tuple(int(s) for s in self.sizes)
            if any(s < 0 for s in sizes) or sum(sizes) != n:
                raise CorpusError(f"split: sizes {sizes} do not sum to labeled-set size {n}")
            return sizes  # type: ignore[return-value]
        fr = self.fractions
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise CorpusError(f"split: fractions {fr} must be nonnegative and sum to 1")
        dev, test = int(n * fr[1]), int(n * fr[2])
        return n - dev - test, dev, test


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def preprocess_sentence(text: str, vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    """Tokenize, map to ids and keep the first ``max_len`` ids. Empty input gives ``[UNK]``."""
    if max_len < 1:
        raise CorpusError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.lookup(t) for t in tokenize(text)[:max_len]]
    return ids or [UNK_ID]


def build_vocab(examples: Sequence[Example], min_freq: int = 2) -> Vocab:
    if not examples:
        raise CorpusError("empty corpus")
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(ex.tokens or tokenize(ex.text))
    for special in (PAD, UNK):
        counts.pop(special, None)
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    index = {PAD: PAD_ID, UNK: UNK_ID}
    index.update((tok, i) for i, tok in enumerate(kept, start=2))
    return Vocab(index, min_freq)


def make_example(id: str, text: str, labels: Mapping[str, int] | None = None) -> Example:
    return Example(id=id, text=text, tokens=tuple(tokenize(text)), labels=dict(labels) if labels is not None else None)


def encode_examples(examples: Iterable[Example], vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> list[Example]:
    return [replace(ex, ids=tuple(preprocess_sentence(ex.text, vocab, max_len))) for ex in examples]


def _check_labels(labels, where: str) -> dict[str, int]:
    if not isinstance(labels, dict):
        raise CorpusError(f"{where}: 'labels' must be an object")
    missing = [t for t in TASKS if t not in labels]
    extra = sorted(set(labels) - set(TASKS))
    if missing or extra:
        raise CorpusError(f"{where}: label keys missing {missing} extra {extra}")
    out = {}
    for t in TASKS:
        v = labels[t]
        if isinstance(v, bool) or v not in (0, 1):
            raise CorpusError(f"{where}: label {t!r} must be 0 or 1, got {v!r}")
        out[t] = int(v)
    return out


def load_corpus(path: str | Path, kind: Literal["labeled", "unlabeled"]) -> list[Example]:
    """Read a JSON-lines sentence file. Blank lines are skipped."""
    if kind not in ("labeled", "unlabeled"):
        raise CorpusError(f"unknown corpus kind {kind!r}")
    out: list[Example] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}: line {n}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("id"), str) or not isinstance(rec.get("text"), str):
                raise CorpusError(f"{where}: record needs string 'id' and 'text'")
            if rec["id"] in seen:
                raise CorpusError(f"{where}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            labels = None
            if kind == "labeled":
                if "labels" not in rec:
                    raise CorpusError(f"{where}: labeled record has no 'labels'")
                labels = _check_labels(rec["labels"], where)
            out.append(make_example(rec["id"], rec["text"], labels))
    return out


def example_record(ex: Example) -> dict:
    rec = {"id": ex.id, "text": ex.text}
    if ex.labels is not None:
        rec["labels"] = {t: ex.labels[t] for t in TASKS}
    return rec


def write_records(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def save_examples(path: str | Path, examples: Iterable[Example]) -> int:
    return write_records(path, (example_record(e) for e in examples))


def split(labeled: Sequence[Example], spec: SplitSpec) -> tuple[list[Example], list[Example], list[Example]]:
    n_train, n_dev, n_test = spec.resolve(len(labeled))
    rng = np.random.default_rng(spec.seed)
    if spec.stratify is None:
        order = rng.permutation(len(labeled))
        items = [labeled[i] for i in order]
        return items[:n_train], items[n_train : n_train + n_dev], items[n_train + n_dev :]

    if spec.stratify not in TASKS:
        raise CorpusError(f"split: unknown stratify task {spec.stratify!r}")
    groups = [[e for e in labeled if e.label(spec.stratify) == c] for c in (0, 1)]
    parts: list[list[Example]] = [[], [], []]
    # class 0 gets floor(share), class 1 the remainder, so totals stay exact
    n0 = len(groups[0])
    dev0 = int(n_dev * n0 / len(labeled)) if labeled else 0
    test0 = int(n_test * n0 / len(labeled)) if labeled else 0
    quotas = [(n0 - dev0 - test0, dev0, test0), None]
    quotas[1] = (len(groups[1]) - (n_dev - dev0) - (n_test - test0), n_dev - dev0, n_test - test0)
    if quotas[1][0] < 0:
        raise CorpusError(f"split: too few {spec.stratify}=1 examples to stratify sizes {(n_train, n_dev, n_test)}")
    for group, (qt, qd, _) in zip(groups, quotas):
        order = rng.permutation(len(group))
        items = [group[i] for i in order]
        parts[0] += items[:qt]
        parts[1] += items[qt : qt + qd]
        parts[2] += items[qt + qd :]
    return tuple([part[i] for i in rng.permutation(len(part))] for part in parts)  # type: ignore[return-value]
