"""Mean-pooled embedding encoder and a 2-layer classification head.

    h = relu(meanpool(E[ids]) @ W_enc + b_enc)
    p = softmax(relu(h @ W1 + b1) @ W2 + b2)

Weights are stored ``(fan_in, fan_out)``. Each task trains its own ParamSet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import PAD_ID
from .errors import SMDAError

ENCODER_PARAMS = ("embedding", "enc_w", "enc_b")
HEAD_PARAMS = ("head_w1", "head_b1", "head_w2", "head_b2")
N_CLASSES = 2


class ModelError(SMDAError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_emb: int = 64
    d_hid: int = 128

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "embedding": (self.vocab_size, self.d_emb),
            "enc_w": (self.d_emb, self.d_hid),
            "enc_b": (self.d_hid,),
            "head_w1": (self.d_hid, self.d_hid),
            "head_b1": (self.d_hid,),
            "head_w2": (self.d_hid, N_CLASSES),
            "head_b2": (N_CLASSES,),
        }


@dataclass
class ParamSet:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    groups: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {"encoder": ENCODER_PARAMS, "head": HEAD_PARAMS}
    )

    def __post_init__(self):
        expected = self.config.shapes()
        if set(self.arrays) != set(expected):
            raise ModelError(f"parameter names {sorted(self.arrays)} != {sorted(expected)}")
        for name, shape in expected.items():
            arr = self.arrays[name]
            if arr.shape != shape:
                raise ModelError(f"{name}: shape {arr.shape} != expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name}: non-finite values")

    def copy(self) -> "ParamSet":
        return ParamSet(self.config, {k: v.copy() for k, v in self.arrays.items()}, dict(self.groups))

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.arrays.items()}

    def group_of(self, name: str) -> str:
        for group, names in self.groups.items():
            if name in names:
                return group
        raise KeyError(name)

    def equals(self, other: "ParamSet") -> bool:
        return self.config == other.config and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def init_params(config: ModelConfig, seed: int) -> ParamSet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    The embedding's fan_in is the vocabulary size (it acts on one-hot ids).
    """
    if min(config.vocab_size, config.d_emb, config.d_hid) < 1:
        raise ModelError(f"dimensions must be positive: {config}")
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ParamSet(config, arrays)


def pad_batch(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    if not seqs:
        raise ModelError("pad_batch: empty batch")
    width = max(len(s) for s in seqs)
    if width == 0:
        raise ModelError("pad_batch: empty id sequence")
    out = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def encode_tensor(params: Mapping[str, Tensor], ids: np.ndarray) -> Tensor:
    """Batched encoder g over a padded ``(B, L)`` id matrix -> ``(B, d_hid)``."""
    vocab = params["embedding"].shape[0]
    if ids.size == 0 or ids.min() < 0 or ids.max() >= vocab:
        raise ModelError(f"ids out of range for vocabulary of size {vocab}")
    pooled = ag.mean_pool(ag.gather(params["embedding"], ids), ids, PAD_ID)
    return ag.relu(ag.add(ag.matmul(pooled, params["enc_w"]), params["enc_b"]))


def predict_tensor(params: Mapping[str, Tensor], hidden: Tensor) -> Tensor:
    """Batched head f over ``(B, d_hid)`` -> ``(B, 2)`` class distributions."""
    if hidden.data.ndim != 2 or hidden.shape[1] != params["head_w1"].shape[0]:
        raise ModelError(f"hidden shape {hidden.shape} does not match head input {params['head_w1'].shape[0]}")
    z = ag.relu(ag.add(ag.matmul(hidden, params["head_w1"]), params["head_b1"]))
    return ag.softmax(ag.add(ag.matmul(z, params["head_w2"]), params["head_b2"]))


def forward(params: Mapping[str, Tensor], ids: np.ndarray) -> Tensor:
    return predict_tensor(params, encode_tensor(params, ids))


def encode(ids: Sequence[int], params: ParamSet) -> np.ndarray:
    if len(ids) == 0:
        raise ModelError("encode: empty id sequence")
    return encode_tensor(params.tensors(), pad_batch([ids])).data[0]


def predict(hidden: np.ndarray, params: ParamSet) -> np.ndarray:
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 1:
        raise ModelError(f"predict: expected a hidden vector, got shape {hidden.shape}")
    return predict_tensor(params.tensors(), Tensor(hidden[None, :])).data[0]


def predict_proba(params: ParamSet, seqs: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
    """Class distributions ``(N, 2)`` for many id sequences, without a graph."""
    tensors = params.tensors()
    out = [forward(tensors, pad_batch(seqs[i : i + batch_size])).data for i in range(0, len(seqs), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, N_CLASSES))
