"""Semi-supervised objective: supervised cross-entropy plus self-training,
entropy minimization and consistency terms on unlabeled sentences.

Targets built from the model's own predictions (the sharpened guess and the
original-sentence distribution) are detached: they enter the graph as
constants. Every log sees its argument clamped to at least ``EPS``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import SMDAError
from .model import ParamSet, forward, pad_batch

EPS = 1e-7
KLOrder = Literal["model_first", "target_first"]


class ObjectiveError(SMDAError):
    pass


@dataclass(frozen=True)
class GammaSchedule:
    gamma0: float = 0.0
    ramp_steps: int = 1
    total_steps: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma0 <= 1.0:
            raise ObjectiveError(f"gamma0 must be in [0, 1], got {self.gamma0}")


def gamma_at(schedule: GammaSchedule, step: int) -> float:
    """Linear ramp from ``gamma0`` to 1 over ``ramp_steps``, then flat at 1."""
    if schedule.ramp_steps <= 0:
        raise ObjectiveError(f"ramp_steps must be positive, got {schedule.ramp_steps}")
    if step < 0:
        raise ObjectiveError(f"step must be >= 0, got {step}")
    return schedule.gamma0 + (1.0 - schedule.gamma0) * min(1.0, step / schedule.ramp_steps)


@dataclass(frozen=True)
class LossBreakdown:
    L_S: float
    L_s: float
    L_e: float
    L_c: float
    L_U: float
    L: float
    gamma: float

    def record(self, step: int | None = None) -> dict:
        rec = asdict(self)
        return rec if step is None else {"step": step, **rec}


def sharpen(p, T: float) -> np.ndarray:
    """Raise to ``1/T`` and renormalize along the last axis."""
    if T <= 0:
        raise ObjectiveError(f"temperature must be positive, got {T}")
    p = np.asarray(p, dtype=np.float64)
    # Work in log space so tiny T does not underflow every entry to zero.
    with np.errstate(divide="ignore"):
        logp = np.log(p) / T
    logp -= logp.max(axis=-1, keepdims=True)
    q = np.exp(logp)
    return q / q.sum(axis=-1, keepdims=True)


def _clamped_log(p) -> Tensor:
    return ag.log(ag.clamp_min(p, EPS))


def cross_entropy_rows(onehot: np.ndarray, pred: Tensor) -> Tensor:
    return ag.neg(ag.sum(ag.mul(Tensor(onehot), _clamped_log(pred)), axis=-1))


def kl_rows(p, q) -> Tensor:
    """Row-wise KL(p || q) on clamped inputs a = max(p, eps), b = max(q, eps).

    Computed as ``sum a * (log a - log b) + (b - a)``. For proper
    distributions without clamped entries the ``b - a`` terms sum to zero and
    this is the usual KL; every term is nonnegative, so clamping can never
    push the result below zero.
    """
    a, b = ag.clamp_min(ag.as_tensor(p), EPS), ag.clamp_min(ag.as_tensor(q), EPS)
    return ag.sum(ag.add(ag.mul(a, ag.sub(ag.log(a), ag.log(b))), ag.sub(b, a)), axis=-1)


def entropy_rows(p) -> Tensor:
    p = ag.as_tensor(p)
    return ag.neg(ag.sum(ag.mul(p, _clamped_log(p)), axis=-1))


def _kl_to_target(pred: Tensor, target: np.ndarray, order: KLOrder) -> Tensor:
    if order == "model_first":
        return kl_rows(pred, Tensor(target))
    if order == "target_first":
        return kl_rows(Tensor(target), pred)
    raise ObjectiveError(f"unknown kl_order {order!r}")


def cross_entropy(label, pred) -> float:
    label = np.asarray(label, dtype=np.float64)
    if label.shape != (2,) or sorted(label.tolist()) != [0.0, 1.0]:
        raise ObjectiveError(f"label must be (1,0) or (0,1), got {label.tolist()}")
    return cross_entropy_rows(label[None, :], Tensor(np.asarray(pred, dtype=np.float64)[None, :])).item()


def kl(p, q) -> float:
    return kl_rows(np.asarray(p, dtype=np.float64)[None, :], np.asarray(q, dtype=np.float64)[None, :]).item()


def entropy(p) -> float:
    return entropy_rows(np.asarray(p, dtype=np.float64)[None, :]).item()


def smda_loss(
    params: Mapping[str, Tensor],
    labeled_ids: np.ndarray,
    onehot: np.ndarray,
    orig_ids: np.ndarray | None,
    aug_ids: np.ndarray | None,
    T: float,
    gamma: float,
    tau: float = 0.0,
    kl_order: KLOrder = "model_first",
    guess: np.ndarray | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Batch objective ``mean CE + gamma * mean(L_s + L_e + L_c)`` as a graph.

    ``orig_ids``/``aug_ids`` are padded id matrices for the unlabeled pairs
    (``None`` or zero rows means no unlabeled data, so the loss is the
    supervised term alone). Pairs whose sharpened target peaks below ``tau``
    contribute zero to all three unsupervised terms.

    ``guess`` overrides the guessed label distribution of the originals; by
    default it is the current prediction. Either way it is a constant.
    """
    if labeled_ids is None or len(labeled_ids) == 0:
        raise ObjectiveError("total_loss: empty labeled batch")
    if not 0.0 <= gamma <= 1.0:
        raise ObjectiveError(f"gamma must be in [0, 1], got {gamma}")
    if T <= 0:
        raise ObjectiveError(f"temperature must be positive, got {T}")

    sup = ag.mean(cross_entropy_rows(onehot, forward(params, labeled_ids)))

    if orig_ids is None or len(orig_ids) == 0:
        zero = 0.0
        total = sup
        return total, LossBreakdown(sup.item(), zero, zero, zero, zero, total.item(), gamma)

    p_orig = forward(params, orig_ids)
    p_aug = forward(params, aug_ids)
    guess = p_orig.data.copy() if guess is None else np.asarray(guess, dtype=np.float64)
    if guess.shape != p_orig.shape:
        raise ObjectiveError(f"guess shape {guess.shape} != prediction shape {p_orig.shape}")
    target = sharpen(guess, T)

    self_rows = _kl_to_target(p_orig, target, kl_order)
    ent_rows = entropy_rows(p_orig)
    cons_rows = _kl_to_target(p_aug, guess, kl_order)
    if tau > 0:
        mask = Tensor((target.max(axis=-1) >= tau).astype(np.float64))
        self_rows, ent_rows, cons_rows = (ag.mul(r, mask) for r in (self_rows, ent_rows, cons_rows))

    l_self, l_ent, l_cons = ag.mean(self_rows), ag.mean(ent_rows), ag.mean(cons_rows)
    unsup = ag.add(ag.add(l_self, l_ent), l_cons)
    total = ag.add(sup, ag.scale(unsup, gamma))
    return total, LossBreakdown(sup.item(), l_self.item(), l_ent.item(), l_cons.item(), unsup.item(), total.item(), gamma)


def _onehot(labels: Sequence[int]) -> np.ndarray:
    out = np.zeros((len(labels), 2))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


# Per-example entry points. These score single sentences against a ParamSet
# and are what the trainer's batched graph reduces to for a batch of one.


def guess_label(example, params: ParamSet) -> np.ndarray:
    return forward(params.tensors(), pad_batch([example.ids])).data[0]


def self_training_loss(example, params: ParamSet, T: float, kl_order: KLOrder = "model_first") -> float:
    p = forward(params.tensors(), pad_batch([example.ids]))
    return _kl_to_target(p, sharpen(p.data, T), kl_order).item()


def entropy_loss(example, params: ParamSet) -> float:
    return entropy_rows(forward(params.tensors(), pad_batch([example.ids]))).item()


def consistency_loss(pair, params: ParamSet, kl_order: KLOrder = "model_first") -> float:
    t = params.tensors()
    target = forward(t, pad_batch([pair.original.ids])).data
    return _kl_to_target(forward(t, pad_batch([pair.augmented.ids])), target, kl_order).item()


def unsupervised_loss(pair, params: ParamSet, T: float, kl_order: KLOrder = "model_first") -> LossBreakdown:
    """L_U for one pair, with L_S = 0 and gamma = 1 so that L == L_U."""
    t = params.tensors()
    p_orig = forward(t, pad_batch([pair.original.ids]))
    p_aug = forward(t, pad_batch([pair.augmented.ids]))
    l_self = _kl_to_target(p_orig, sharpen(p_orig.data, T), kl_order).item()
    l_ent = entropy_rows(p_orig).item()
    l_cons = _kl_to_target(p_aug, p_orig.data, kl_order).item()
    l_u = l_self + l_ent + l_cons
    return LossBreakdown(0.0, l_self, l_ent, l_cons, l_u, l_u, 1.0)


def batch_arrays(labeled_batch, pairs, task: str):
    labeled_ids = pad_batch([ex.ids for ex in labeled_batch]) if labeled_batch else None
    onehot = _onehot([ex.label(task) for ex in labeled_batch]) if labeled_batch else None
    if pairs:
        orig_ids = pad_batch([p.original.ids for p in pairs])
        aug_ids = pad_batch([p.augmented.ids for p in pairs])
    else:
        orig_ids = aug_ids = None
    return labeled_ids, onehot, orig_ids, aug_ids


def total_loss(
    labeled_batch,
    unlabeled_pairs,
    params: ParamSet,
    task: str,
    T: float,
    gamma: float,
    tau: float = 0.0,
    kl_order: KLOrder = "model_first",
) -> LossBreakdown:
    if not labeled_batch:
        raise ObjectiveError("total_loss: empty labeled batch")
    arrays = batch_arrays(labeled_batch, unlabeled_pairs, task)
    return smda_loss(params.tensors(), *arrays, T=T, gamma=gamma, tau=tau, kl_order=kl_order)[1]
