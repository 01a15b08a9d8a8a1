"""Paraphrase providers, minority-label balancing and unlabeled pairing.

Two providers stand in for back-translation: a file-backed table of
precomputed paraphrases, and a seeded rule-based augmenter (synonym
substitution, adjacent swaps, word drops).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .corpus import TASKS, Example, detokenize, make_example, tokenize
from .errors import SMDAError


class AugmentError(SMDAError):
    pass


def aug_id(source_id: str, j: int) -> str:
    return f"{source_id}#aug{j}"


def load_paraphrase_table(path: str | Path) -> dict[str, list[str]]:
    table: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pid, paras = rec["id"], rec["paraphrases"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise AugmentError(f"{path}: line {n}: expected {{'id', 'paraphrases'}} record") from None
            if not isinstance(pid, str) or not isinstance(paras, list) or not all(isinstance(p, str) for p in paras):
                raise AugmentError(f"{path}: line {n}: 'id' must be a string and 'paraphrases' a list of strings")
            table[pid] = paras
    return table


def load_lexicon(path: str | Path) -> dict[str, list[str]]:
    """Read ``word<TAB>synonym`` lines; a word may appear on several lines."""
    lex: dict[str, list[str]] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise AugmentError(f"{path}: line {n}: expected 'word<TAB>synonym'")
        lex.setdefault(parts[0].lower(), []).append(parts[1].lower())
    return lex


@dataclass(frozen=True)
class ParaphraseProvider:
    mode: Literal["file", "rule"] = "rule"
    table: Mapping[str, Sequence[str]] | None = None
    lexicon: Mapping[str, Sequence[str]] = field(default_factory=dict)
    swap_prob: float = 0.1
    drop_prob: float = 0.1
    synonym_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("file", "rule"):
            raise AugmentError(f"unknown provider mode {self.mode!r}")
        if self.mode == "file" and self.table is None:
            raise AugmentError("file-backed provider needs a paraphrase table")
        for name in ("swap_prob", "drop_prob", "synonym_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise AugmentError(f"{name} must be in [0, 1], got {p}")

    def texts(self, example: Example, k: int) -> list[str]:
        if k < 1:
            raise AugmentError(f"k must be >= 1, got {k}")
        if self.mode == "file":
            stored = self.table.get(example.id)
            if stored is None or len(stored) < k:
                have = 0 if stored is None else len(stored)
                raise AugmentError(f"no paraphrases for id {example.id!r}: need {k}, table has {have}")
            return list(stored[:k])
        return [self._rule_paraphrase(example, j) for j in range(k)]

    def _rng(self, example_id: str, draw: int) -> np.random.Generator:
        digest = hashlib.sha256(example_id.encode("utf-8")).digest()
        return np.random.default_rng([self.seed, int.from_bytes(digest[:8], "little"), draw])

    def _rule_paraphrase(self, example: Example, draw: int) -> str:
        rng = self._rng(example.id, draw)
        tokens = list(example.tokens or tokenize(example.text))
        out = list(tokens)
        if self.lexicon:
            for i, tok in enumerate(out):
                syns = self.lexicon.get(tok)
                if syns and rng.random() < self.synonym_prob:
                    out[i] = syns[int(rng.integers(len(syns)))]
        if self.swap_prob > 0:
            i = 0
            while i < len(out) - 1:
                if rng.random() < self.swap_prob:
                    out[i], out[i + 1] = out[i + 1], out[i]
                    i += 2
                else:
                    i += 1
        if self.drop_prob > 0 and len(out) > 1:
            kept = [t for t in out if rng.random() >= self.drop_prob]
            out = kept or [out[int(rng.integers(len(out)))]]
        if out == tokens:
            return example.text
        return detokenize(out)


def paraphrase(example: Example, provider: ParaphraseProvider, k: int) -> list[Example]:
    """``k`` paraphrased copies of ``example``; labels are carried over unchanged."""
    texts = provider.texts(example, k)
    labels = dict(example.labels) if example.labels is not None else None
    out = []
    for j, text in enumerate(texts):
        if not text.strip():
            raise AugmentError(f"empty paraphrase {j} for id {example.id!r}")
        out.append(make_example(aug_id(example.id, j), text, labels))
    return out


def balance_minority(
    train: Sequence[Example],
    tasks: Iterable[str],
    provider: ParaphraseProvider,
    k: int = 4,
) -> list[Example]:
    """Append ``k`` paraphrases of every example positive on any listed task.

    An example positive on several listed tasks is still augmented only ``k``
    times. Originals come first, augmentations after, in input order.
    """
    tasks = list(tasks)
    unknown = [t for t in tasks if t not in TASKS]
    if unknown:
        raise AugmentError(f"unknown tasks {unknown}")
    out = list(train)
    if k == 0:
        return out
    for ex in train:
        if ex.labels is None:
            raise AugmentError(f"example {ex.id!r} is unlabeled")
        if any(ex.labels[t] == 1 for t in tasks):
            out.extend(paraphrase(ex, provider, k))
    return out


@dataclass(frozen=True)
class AugmentedPair:
    original: Example
    augmented: Example

    def record(self) -> dict:
        return {"id": self.original.id, "text": self.original.text, "aug_id": self.augmented.id, "aug_text": self.augmented.text}


def pair_unlabeled(unlabeled: Sequence[Example], provider: ParaphraseProvider) -> list[AugmentedPair]:
    pairs = []
    for ex in unlabeled:
        (aug,) = paraphrase(replace(ex, labels=None), provider, 1)
        pairs.append(AugmentedPair(ex, aug))
    return pairs


def load_pairs(path: str | Path) -> list[AugmentedPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pairs.append(AugmentedPair(make_example(rec["id"], rec["text"]), make_example(rec["aug_id"], rec["aug_text"])))
            except (json.JSONDecodeError, KeyError, TypeError):
                raise AugmentError(f"{path}: line {n}: expected {{'id', 'text', 'aug_id', 'aug_text'}} record") from None
    return pairs
