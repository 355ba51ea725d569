"""Bit-exact model checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"SAILCKPT"
    uint32    format version (1)
    uint32    descriptor length L
    L bytes   architecture descriptor (UTF-8 JSON, sorted keys)
    uint64    parameter count P
    P x 8     parameters as IEEE-754 float64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .denoiser import Arch, DenoiserModel
from .errors import ArtifactIOError
from .pairs import atomic_write

MAGIC = b"SAILCKPT"
VERSION = 1


def dumps_checkpoint(model: DenoiserModel) -> bytes:
    desc = model.arch.to_json().encode("utf-8")
    head = MAGIC + struct.pack("<II", VERSION, len(desc)) + desc + struct.pack("<Q", model.params.size)
    return head + model.params.astype("<f8").tobytes()


def loads_checkpoint(blob: bytes) -> DenoiserModel:
    if blob[:8] != MAGIC:
        raise ArtifactIOError("not a sailforge checkpoint (bad magic)")
    try:
        version, n_desc = struct.unpack_from("<II", blob, 8)
        if version != VERSION:
            raise ArtifactIOError(f"unsupported checkpoint version {version}")
        pos = 16
        arch = Arch.from_json(blob[pos : pos + n_desc].decode("utf-8"))
        pos += n_desc
        (count,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if len(blob) - pos != 8 * count:
            raise ArtifactIOError(f"checkpoint truncated: expected {count} parameters")
        params = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64)
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise ArtifactIOError(f"corrupt checkpoint: {exc}") from exc
    return DenoiserModel(arch, params)


def save_checkpoint(model: DenoiserModel, path) -> None:
    atomic_write(path, dumps_checkpoint(model))


def load_checkpoint(path) -> DenoiserModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads_checkpoint(blob)
