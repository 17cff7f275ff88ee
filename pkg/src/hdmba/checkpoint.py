"""Checkpoint files: a JSON manifest line followed by raw tensor payloads.

Layout::

    {"format": "HDMBA-CKPT", "version": 1, "model_config": {...},
     "train_config": {...} | null, "train_state": {...} | null,
     "tensors": [{"name", "shape", "dtype", "offset", "nbytes"}, ...]}\\n
    <payload bytes>

Payloads are little-endian, C-ordered, concatenated in manifest order;
offsets are relative to the first payload byte. Serialization is canonical
(sorted JSON keys, fixed tensor order) so save -> load -> save is byte-exact.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

FORMAT = "HDMBA-CKPT"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_config: dict
    tensors: dict[str, np.ndarray]
    train_config: dict | None = None
    train_state: dict | None = None
    extra: dict = field(default_factory=dict)

    def params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith("optim.")}


def encode(ckpt: Checkpoint) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise CheckpointError(f"tensor {name}: unsupported dtype {dtype}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT, "version": VERSION,
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "train_state": ckpt.train_state,
        "extra": ckpt.extra,
        "tensors": entries,
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    return head + b"".join(blobs)


def decode(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{source}: missing manifest line")
    try:
        manifest = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: bad manifest: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{source}: not a checkpoint (format={manifest.get('format')!r})")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{source}: unsupported version {manifest.get('version')}")
    payload = memoryview(raw)[nl + 1:]
    tensors = {}
    for e in manifest["tensors"]:
        start, n = e["offset"], e["nbytes"]
        if start + n > len(payload):
            raise CheckpointError(f"{source}: tensor {e['name']} runs past end of file")
        arr = np.frombuffer(payload[start:start + n], dtype=_DTYPES[e["dtype"]])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(e["dtype"])
    return Checkpoint(manifest["model_config"], tensors, manifest.get("train_config"),
                      manifest.get("train_state"), manifest.get("extra") or {})


def save(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode(ckpt))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode(raw, str(path))


def from_model(model, train_config: dict | None = None, train_state: dict | None = None,
               extra_tensors: dict[str, np.ndarray] | None = None) -> Checkpoint:
    tensors = model.state_dict()
    if extra_tensors:
        tensors.update(extra_tensors)
    return Checkpoint(model.config.to_dict(), tensors, train_config, train_state)


def to_model(ckpt: Checkpoint):
    from .network import HDMba, ModelConfig

    model = HDMba(ModelConfig.from_dict(ckpt.model_config))
    model.load_state_dict(ckpt.params())
    return model
