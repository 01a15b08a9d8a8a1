"""Synthetic binary text corpus for desk-scale runs.

Each sentence has a latent class c. Class-1 sentences draw keywords from a
positive pool and class-0 sentences from a negative pool; with probability
``noise`` a keyword slot draws from the opposite pool instead. Keywords are
Zipf-distributed inside each pool, so a small labeled set only covers the
frequent ones. Filler words shared by both classes pad every sentence.

The six task labels are a fixed function of c:

    Emotional_disclosure   = c
    Information_disclosure = 1 - c
    Support                = c
    General_support        = 1 - c
    Information_support    = c
    Emotional_support      = 1 - c

Synonyms are clusters of ``cluster_size`` keywords inside one pool; the
paraphrase table substitutes keywords with cluster members.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import TASKS, write_records

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")


@dataclass(frozen=True)
class SynthConfig:
    n_labeled: int = 100
    n_unlabeled: int = 2000
    n_test: int = 500
    n_dev: int = 100
    seed: int = 0
    noise: float = 0.1
    pool_size: int = 300
    n_filler: int = 40
    zipf: float = 1.0
    keywords: tuple[int, int] = (3, 5)
    fillers: tuple[int, int] = (2, 4)
    cluster_size: int = 4
    n_paraphrases: int = 4
    swap_rate: float = 0.5


def labels_for(c: int) -> dict[str, int]:
    return dict(zip(TASKS, (c, 1 - c, c, 1 - c, c, 1 - c)))


def _words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        syl = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syl))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


class _Generator:
    def __init__(self, cfg: SynthConfig):
        if min(cfg.n_labeled, cfg.n_test) < 1 or cfg.n_unlabeled < 0 or cfg.n_dev < 0:
            raise ValueError("synth sizes must be positive")
        if not 0.0 <= cfg.noise <= 1.0:
            raise ValueError(f"noise must be in [0, 1], got {cfg.noise}")
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        taken: set[str] = set()
        self.pools = [_words(self.rng, cfg.pool_size, taken), _words(self.rng, cfg.pool_size, taken)]
        self.filler = _words(self.rng, cfg.n_filler, taken)
        ranks = np.arange(1, cfg.pool_size + 1, dtype=np.float64)
        w = ranks ** (-cfg.zipf)
        self.weights = w / w.sum()
        self.synonyms: dict[str, list[str]] = {}
        for pool in self.pools:
            order = self.rng.permutation(len(pool))
            for start in range(0, len(pool), cfg.cluster_size):
                cluster = [pool[i] for i in order[start : start + cfg.cluster_size]]
                for word in cluster:
                    self.synonyms[word] = [s for s in cluster if s != word]

    def sentence(self) -> tuple[int, list[str]]:
        cfg, rng = self.cfg, self.rng
        c = int(rng.integers(2))
        n_kw = int(rng.integers(cfg.keywords[0], cfg.keywords[1] + 1))
        n_fill = int(rng.integers(cfg.fillers[0], cfg.fillers[1] + 1))
        words = []
        for _ in range(n_kw):
            side = 1 - c if rng.random() < cfg.noise else c
            words.append(self.pools[side][rng.choice(cfg.pool_size, p=self.weights)])
        words += [self.filler[i] for i in rng.integers(len(self.filler), size=n_fill)]
        return c, [words[i] for i in rng.permutation(len(words))]

    def paraphrases(self, words: list[str]) -> list[str]:
        out = []
        for _ in range(self.cfg.n_paraphrases):
            new = [
                self.synonyms[w][self.rng.integers(len(self.synonyms[w]))]
                if w in self.synonyms and self.synonyms[w] and self.rng.random() < self.cfg.swap_rate
                else w
                for w in words
            ]
            out.append(_render(new))
        return out


def _render(words: list[str]) -> str:
    text = " ".join(words)
    return text[:1].upper() + text[1:] + "."


def synth(cfg: SynthConfig, out_dir: str | Path) -> dict[str, int]:
    """Write train/dev/test/unlabeled record files plus paraphrase table and lexicon.

    Returns the number of records written per file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gen = _Generator(cfg)
    counts: dict[str, int] = {}
    para_records = []

    def make(prefix: str, n: int, labeled: bool):
        recs = []
        for i in range(n):
            c, words = gen.sentence()
            rid = f"{prefix}-{i:06d}"
            rec = {"id": rid, "text": _render(words)}
            if labeled:
                rec["labels"] = labels_for(c)
            recs.append(rec)
            para_records.append({"id": rid, "paraphrases": gen.paraphrases(words)})
        return recs

    for name, n, labeled in (
        ("train", cfg.n_labeled, True),
        ("dev", cfg.n_dev, True),
        ("test", cfg.n_test, True),
        ("unlabeled", cfg.n_unlabeled, False),
    ):
        counts[name] = write_records(out / f"{name}.jsonl", make(name, n, labeled))
    counts["paraphrases"] = write_records(out / "paraphrases.jsonl", para_records)
    lex_lines = [f"{w}\t{s}" for w in sorted(gen.synonyms) for s in gen.synonyms[w]]
    (out / "lexicon.tsv").write_text("\n".join(lex_lines) + "\n", encoding="utf-8")
    counts["lexicon"] = len(lex_lines)
    return counts


def config_record(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["keywords"], d["fillers"] = list(cfg.keywords), list(cfg.fillers)
    return d
