"""Checkpoint files.

Layout (little-endian)::

    b"ADBC" | version u16 | manifest length u32 | manifest (UTF-8) | blobs

The manifest is line-based: ``step N``, ``epoch N``, ``cursor N``,
``perm i,j,...``, ``rng <json>``, one ``config <line>`` per config line and
one ``tensor <name> <shape> <offset> <nbytes>`` per float32 blob. Offsets are
relative to the start of the blob section.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config, parse_config
from .optim import OptimizerState

MAGIC = b"ADBC"
VERSION = 1
_HEADER = struct.Struct("<4sHI")


@dataclass
class Checkpoint:
    config: Config
    params: dict
    optimizer: OptimizerState
    step: int = 0
    epoch: int = 0
    cursor: int = 0
    perm: list = field(default_factory=list)
    rng_state: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    blobs = []
    lines = [
        f"step {ckpt.step}",
        f"epoch {ckpt.epoch}",
        f"cursor {ckpt.cursor}",
        f"perm {','.join(str(int(i)) for i in ckpt.perm)}",
        f"rng {json.dumps(ckpt.rng_state, sort_keys=True)}",
        f"adam_step {ckpt.optimizer.step}",
    ]
    lines += [f"config {line}" for line in ckpt.config.to_text().splitlines()]
    offset = 0
    groups = [("param", ckpt.params), ("adam_m", ckpt.optimizer.m), ("adam_v", ckpt.optimizer.v)]
    for prefix, arrays in groups:
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            shape = ",".join(str(d) for d in np.shape(arr)) or "scalar"
            lines.append(f"tensor {prefix}.{name} {shape} {offset} {len(data)}")
            blobs.append(data)
            offset += len(data)
    manifest = ("\n".join(lines) + "\n").encode()
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(manifest)))
        f.write(manifest)
        for b in blobs:
            f.write(b)
    return path


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    magic, version, mlen = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} checkpoint")
    manifest = raw[_HEADER.size : _HEADER.size + mlen].decode()
    body = raw[_HEADER.size + mlen :]
    scalars, config_lines = {}, []
    groups = {"param": {}, "adam_m": {}, "adam_v": {}}
    for line in manifest.splitlines():
        kind, _, rest = line.partition(" ")
        if kind == "config":
            config_lines.append(rest)
        elif kind == "tensor":
            name, shape, off, nbytes = rest.split(" ")
            shape = () if shape == "scalar" else tuple(int(s) for s in shape.split(","))
            off, nbytes = int(off), int(nbytes)
            arr = np.frombuffer(body[off : off + nbytes], dtype="<f4").reshape(shape).astype(np.float32)
            prefix, pname = name.split(".", 1)
            groups[prefix][pname] = arr
        else:
            scalars[kind] = rest
    config = parse_config("\n".join(config_lines))
    opt = OptimizerState(
        weight_decay=config.optim.weight_decay,
        betas=(config.optim.beta1, config.optim.beta2),
        eps=config.optim.eps,
        step=int(scalars["adam_step"]),
        m=groups["adam_m"],
        v=groups["adam_v"],
    )
    perm = [int(i) for i in scalars.get("perm", "").split(",") if i]
    return Checkpoint(
        config=config,
        params=groups["param"],
        optimizer=opt,
        step=int(scalars["step"]),
        epoch=int(scalars["epoch"]),
        cursor=int(scalars["cursor"]),
        perm=perm,
        rng_state=json.loads(scalars["rng"]),
    )
