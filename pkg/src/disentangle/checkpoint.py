"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"FDRNCKPT"
    u32       format version
    u64       header length in bytes
    ...       header: UTF-8 JSON, sorted keys, compact separators
    ...       tensor payload: float64 little-endian, C order, in header order

The header holds the network config, the training config (if any), the
iteration, the RNG state, Adam scalars and the tensor directory (name and
shape). Tensor names are ``param/<name>``, ``adam_m/<name>`` and
``adam_v/<name>``. Serialization is canonical, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig, TrainConfig
from .errors import DataError
from .network import FDRNet
from .optim import AdamState

MAGIC = b"FDRNCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    network: FDRNet
    adam: AdamState
    iteration: int = 0
    rng_state: dict | None = None
    train_config: TrainConfig | None = None


def to_bytes(ckpt: Checkpoint) -> bytes:
    tensors: list[tuple[str, np.ndarray]] = []
    names = []
    for name, p in ckpt.network.named_parameters():
        tensors.append((f"param/{name}", p.data))
        names.append(name)
    for kind, store in (("adam_m", ckpt.adam.m), ("adam_v", ckpt.adam.v)):
        for name in names:
            if name in store:
                tensors.append((f"{kind}/{name}", store[name]))
    header = {
        "format": VERSION,
        "network": ckpt.network.config.to_dict(),
        "train": None if ckpt.train_config is None else ckpt.train_config.to_dict(),
        "iteration": int(ckpt.iteration),
        "rng_state": ckpt.rng_state,
        "adam": {"step": ckpt.adam.step, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    parts.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in tensors)
    return b"".join(parts)


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    start = 8 + struct.calcsize("<IQ")
    if len(blob) < start:
        raise DataError("checkpoint truncated inside the preamble")
    version, hlen = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    if start + hlen > len(blob):
        raise DataError("checkpoint truncated inside the header")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
        net = FDRNet(NetworkConfig(**header["network"]))
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed checkpoint header: {exc}") from exc
    offset = start + hlen

    params = dict(net.named_parameters())
    a = header["adam"]
    adam = AdamState(beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(blob):
            raise DataError(f"checkpoint truncated while reading {entry['name']}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
        kind, _, name = entry["name"].partition("/")
        if kind == "param":
            if name not in params or params[name].shape != shape:
                raise DataError(f"checkpoint tensor {name!r} does not match the network layout")
            params[name].data[...] = arr
        elif kind == "adam_m":
            adam.m[name] = arr
        elif kind == "adam_v":
            adam.v[name] = arr
        else:
            raise DataError(f"unknown tensor kind {kind!r} in checkpoint")
    if offset != len(blob):
        raise DataError("trailing bytes after checkpoint payload")
    train = None if header["train"] is None else TrainConfig(**header["train"])
    return Checkpoint(net, adam, header["iteration"], header["rng_state"], train)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(blob)
