"""Training loop, optimizers with per-group learning rates, evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .augment import AugmentedPair, ParaphraseProvider, balance_minority, pair_unlabeled
from .autograd import NonFiniteError
from .corpus import SUPPORT_TASKS, TASKS, Example, Vocab, encode_examples, load_corpus
from .errors import SMDAError
from .metrics import Metrics, argmax_labels, compute_metrics
from .model import ModelConfig, ParamSet, init_params, predict_proba
from .objective import GammaSchedule, LossBreakdown, batch_arrays, gamma_at, smda_loss

log = logging.getLogger(__name__)

BATCH_SIZE_GRID = (32, 64, 128, 256)


class TrainError(SMDAError):
    pass


class DivergenceError(TrainError):
    pass


@dataclass
class TrainConfig:
    task: str = "Emotional_disclosure"
    batch_size: int = 32
    batch_size_grid: tuple[int, ...] = BATCH_SIZE_GRID
    epochs: int = 20
    optimizer: str = "sgd"
    lr_encoder: float = 1e-2
    lr_head: float = 1e-2
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    T: float = 0.5
    gamma0: float = 0.0
    ramp_fraction: float = 0.5
    # Fixes gamma for every step; 0.0 gives the supervised-only baseline.
    gamma_constant: float | None = None
    tau: float = 0.0
    kl_order: str = "model_first"
    seed: int = 0
    d_emb: int = 64
    d_hid: int = 128
    max_len: int = 64
    min_freq: int = 2
    balance_tasks: tuple[str, ...] = SUPPORT_TASKS
    k: int = 4
    provider: str = "rule"
    paraphrases: str | None = None
    lexicon: str | None = None
    swap_prob: float = 0.1
    drop_prob: float = 0.1
    synonym_prob: float = 0.5

    def __post_init__(self):
        self.batch_size_grid = tuple(self.batch_size_grid)
        self.balance_tasks = tuple(self.balance_tasks)
        self.adam_betas = tuple(self.adam_betas)
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise TrainError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.batch_size_grid and self.batch_size not in self.batch_size_grid:
            raise TrainError(f"batch_size {self.batch_size} not in grid {self.batch_size_grid} (set batch_size_grid=[] to override)")
        if self.epochs < 1:
            raise TrainError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("sgd", "adam"):
            raise TrainError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.lr_encoder < 0 or self.lr_head < 0:
            raise TrainError("learning rates must be nonnegative")
        if self.T <= 0:
            raise TrainError(f"temperature must be positive, got {self.T}")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise TrainError(f"ramp_fraction must be in (0, 1], got {self.ramp_fraction}")
        if self.gamma_constant is not None and not 0.0 <= self.gamma_constant <= 1.0:
            raise TrainError(f"gamma_constant must be in [0, 1], got {self.gamma_constant}")
        if self.kl_order not in ("model_first", "target_first"):
            raise TrainError(f"kl_order must be 'model_first' or 'target_first', got {self.kl_order!r}")
        unknown = [t for t in self.balance_tasks if t not in TASKS]
        if unknown:
            raise TrainError(f"unknown balance tasks {unknown}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("batch_size_grid", "balance_tasks", "adam_betas"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise TrainError(f"unknown config keys {unknown}")
        return cls(**d)

    def lr_for(self, group: str) -> float:
        return {"encoder": self.lr_encoder, "head": self.lr_head}[group]

    def make_provider(self) -> ParaphraseProvider:
        from .augment import load_lexicon, load_paraphrase_table

        table = load_paraphrase_table(self.paraphrases) if self.provider == "file" and self.paraphrases else None
        lexicon = load_lexicon(self.lexicon) if self.lexicon else {}
        return ParaphraseProvider(
            mode=self.provider,
            table=table,
            lexicon=lexicon,
            swap_prob=self.swap_prob,
            drop_prob=self.drop_prob,
            synonym_prob=self.synonym_prob,
            seed=self.seed,
        )


@dataclass
class TrainData:
    """Encoded, ready-to-train inputs for one run."""

    train: list[Example]
    dev: list[Example]
    pairs: list[AugmentedPair]
    vocab: Vocab


def encode_pairs(pairs: Sequence[AugmentedPair], vocab: Vocab, max_len: int) -> list[AugmentedPair]:
    origs = encode_examples([p.original for p in pairs], vocab, max_len)
    augs = encode_examples([p.augmented for p in pairs], vocab, max_len)
    return [AugmentedPair(o, a) for o, a in zip(origs, augs)]


def prepare_data(
    train: Sequence[Example],
    dev: Sequence[Example],
    unlabeled: Sequence[Example] | Sequence[AugmentedPair],
    vocab: Vocab,
    config: TrainConfig,
    balanced: bool = False,
) -> TrainData:
    """Balance the labeled set (unless ``balanced``), pair unlabeled sentences, encode."""
    provider = None
    if not balanced and config.k > 0 and config.balance_tasks:
        provider = config.make_provider()
        train = balance_minority(train, config.balance_tasks, provider, config.k)
    if unlabeled and not isinstance(unlabeled[0], AugmentedPair):
        provider = provider or config.make_provider()
        unlabeled = pair_unlabeled(unlabeled, provider)
    return TrainData(
        train=encode_examples(train, vocab, config.max_len),
        dev=encode_examples(dev, vocab, config.max_len),
        pairs=encode_pairs(unlabeled, vocab, config.max_len),
        vocab=vocab,
    )


def make_mixed_batches(
    labeled: Sequence[Example],
    unlabeled_pairs: Sequence[AugmentedPair],
    batch_size: int,
    seed: int,
    epoch: int,
) -> list[tuple[list[Example], list[AugmentedPair]]]:
    """One epoch of (labeled batch, unlabeled-pair batch) steps.

    Both pools are shuffled with generators derived from (seed, epoch); the
    unlabeled pool is cycled when it runs short. The last labeled batch may be
    partial; each step's pair batch matches the labeled batch size.
    """
    if batch_size < 1:
        raise TrainError(f"batch_size must be >= 1, got {batch_size}")
    if not labeled:
        raise TrainError("make_mixed_batches: empty labeled pool")
    lab_order = np.random.default_rng([seed, epoch, 0]).permutation(len(labeled))
    unl_order = np.random.default_rng([seed, epoch, 1]).permutation(len(unlabeled_pairs)) if unlabeled_pairs else None
    batches = []
    cursor = 0
    for start in range(0, len(labeled), batch_size):
        lab = [labeled[i] for i in lab_order[start : start + batch_size]]
        pairs: list[AugmentedPair] = []
        if unl_order is not None:
            idx = (cursor + np.arange(len(lab))) % len(unl_order)
            pairs = [unlabeled_pairs[i] for i in unl_order[idx]]
            cursor += len(lab)
        batches.append((lab, pairs))
    return batches


class Optimizer:
    """SGD or Adam with one learning rate per parameter group."""

    def __init__(self, params: ParamSet, config: TrainConfig):
        self.params = params
        self.config = config
        self.t = 0
        if config.optimizer == "adam":
            self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        for name, g in grads.items():
            lr = cfg.lr_for(self.params.group_of(name))
            if cfg.optimizer == "sgd":
                self.params.arrays[name] = self.params.arrays[name] - lr * g
                continue
            b1, b2 = cfg.adam_betas
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            self.params.arrays[name] = self.params.arrays[name] - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def evaluate(params: ParamSet, examples: Sequence[Example], task: str) -> Metrics:
    if not examples:
        raise TrainError("evaluate: empty example set")
    gold = [ex.label(task) for ex in examples]
    pred = argmax_labels(predict_proba(params, [ex.ids for ex in examples]))
    return compute_metrics(gold, pred)


@dataclass
class TrainState:
    step: int = 0
    best_dev_macro_f1: float = -1.0
    best_epoch: int = 0
    epochs: list[dict] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)


def _mean_breakdown(records: list[LossBreakdown]) -> dict:
    keys = ("L_S", "L_s", "L_e", "L_c", "L_U", "L", "gamma")
    return {k: float(np.mean([getattr(r, k) for r in records])) for k in keys}


def train(data: TrainData, config: TrainConfig, init: ParamSet | None = None, trace: list | None = None) -> tuple[ParamSet, TrainState]:
    """Run the optimization and return the best-dev checkpoint and history.

    ``trace``, when given, receives a copy of the parameters after every step.
    """
    config.validate()
    if not data.train:
        raise TrainError("train: no labeled training examples")
    params = init.copy() if init is not None else init_params(ModelConfig(len(data.vocab), config.d_emb, config.d_hid), config.seed)
    opt = Optimizer(params, config)
    steps_per_epoch = -(-len(data.train) // config.batch_size)
    total = steps_per_epoch * config.epochs
    schedule = GammaSchedule(config.gamma0, max(1, round(config.ramp_fraction * total)), total)
    state = TrainState()
    best = params.copy()

    for epoch in range(1, config.epochs + 1):
        epoch_losses = []
        for lab, pairs in make_mixed_batches(data.train, data.pairs, config.batch_size, config.seed, epoch):
            gamma = config.gamma_constant if config.gamma_constant is not None else gamma_at(schedule, state.step)
            leaves = params.tensors(requires_grad=True)
            try:
                loss, breakdown = smda_loss(
                    leaves,
                    *batch_arrays(lab, pairs, config.task),
                    T=config.T,
                    gamma=gamma,
                    tau=config.tau,
                    kl_order=config.kl_order,
                )
                grads = ag.backward(loss, leaves)
            except NonFiniteError as exc:
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {state.step}: {exc}") from None
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergenceError(f"non-finite gradient at epoch {epoch}, step {state.step}")
            opt.step(grads)
            state.step += 1
            epoch_losses.append(breakdown)
            state.steps.append(breakdown.record(state.step))
            if trace is not None:
                trace.append(params.copy())

        dev_metrics = evaluate(params, data.dev, config.task) if data.dev else None
        dev_f1 = dev_metrics.macro_f1 if dev_metrics else 0.0
        record = {
            "epoch": epoch,
            "dev_accuracy": dev_metrics.accuracy if dev_metrics else None,
            "dev_macro_f1": dev_metrics.macro_f1 if dev_metrics else None,
            **_mean_breakdown(epoch_losses),
        }
        state.epochs.append(record)
        if dev_f1 > state.best_dev_macro_f1:
            state.best_dev_macro_f1 = dev_f1
            state.best_epoch = epoch
            best = params.copy()
        log.info("epoch %d  L=%.4f  dev_acc=%s  dev_f1=%.4f", epoch, record["L"], record["dev_accuracy"], dev_f1)

    return best, state


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=False) + "\n")


def predict_file(params: ParamSet, vocab: Vocab, max_len: int, in_path: str | Path, out_path: str | Path, task: str) -> int:
    """Label every sentence of an unlabeled record file; returns the record count."""
    examples = encode_examples(load_corpus(in_path, "unlabeled"), vocab, max_len)
    probs = predict_proba(params, [ex.ids for ex in examples])
    labels = argmax_labels(probs) if len(examples) else []
    write_jsonl(
        out_path,
        ({"id": ex.id, "task": task, "label": int(lab), "p1": float(p[1])} for ex, lab, p in zip(examples, labels, probs)),
    )
    return len(examples)
