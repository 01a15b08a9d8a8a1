"""Checkpoint directory format.

A checkpoint is a directory holding:

* ``params.bin``: every parameter array as little-endian float64, concatenated
  in manifest order;
* ``manifest.json``: format version, task, epoch, config hash, model
  dimensions, max_len, and one entry per tensor ``{name, shape, offset,
  group}`` (offset in bytes);
* ``vocab.tsv``: the vocabulary as ``token<TAB>index`` lines.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocab
from .errors import SMDAError
from .model import ModelConfig, ParamSet

FORMAT = "smda-checkpoint/1"
_DTYPE = np.dtype("<f8")


class CheckpointError(SMDAError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Checkpoint:
    params: ParamSet
    vocab: Vocab
    task: str
    epoch: int
    max_len: int
    config: dict


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, offset, chunks = [], 0, []
    for name, arr in ckpt.params.arrays.items():
        raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "group": ckpt.params.group_of(name)})
        offset += len(raw)
        chunks.append(raw)
    cfg = ckpt.params.config
    manifest = {
        "format": FORMAT,
        "task": ckpt.task,
        "epoch": ckpt.epoch,
        "config_hash": config_hash(ckpt.config),
        "model": {"vocab_size": cfg.vocab_size, "d_emb": cfg.d_emb, "d_hid": cfg.d_hid},
        "max_len": ckpt.max_len,
        "tensors": entries,
        "config": ckpt.config,
    }
    (path / "params.bin").write_bytes(b"".join(chunks))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ckpt.vocab.save(path / "vocab.tsv")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        raw = (path / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"{path}: missing checkpoint file {Path(exc.filename).name}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    arrays = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start, stop = entry["offset"], entry["offset"] + count * _DTYPE.itemsize
        if stop > len(raw):
            raise CheckpointError(f"{path}: params.bin too short for tensor {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw[start:stop], dtype=_DTYPE).reshape(entry["shape"]).astype(np.float64)
    model = ModelConfig(**manifest["model"])
    vocab = Vocab.load(path / "vocab.tsv", manifest["config"].get("min_freq", 2))
    if len(vocab) != model.vocab_size:
        raise CheckpointError(f"{path}: vocab size {len(vocab)} != model vocab size {model.vocab_size}")
    return Checkpoint(ParamSet(model, arrays), vocab, manifest["task"], manifest["epoch"], manifest["max_len"], manifest["config"])
