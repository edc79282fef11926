"""Versioned binary checkpoints for critic state.

Layout (all integers little-endian):

    magic "DCRC" | u32 version | 8-byte architecture hash
    u32 arch-json length | arch json (utf-8)
    u32 tensor count | per tensor: u32 byte length + float32 LE payload

Tensors appear in Critic.named_state() order: conv kernel/bias, BN
scale/shift and running mean/variance per block, then dense and head.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointError
from .network import Critic, CriticArchitecture

MAGIC = b"DCRC"
VERSION = 1


def save_checkpoint(critic: Critic) -> bytes:
    arch_json = json.dumps(critic.arch.as_dict(), sort_keys=True).encode()
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        critic.arch.hash(),
        struct.pack("<I", len(arch_json)),
        arch_json,
    ]
    tensors = critic.named_state()
    parts.append(struct.pack("<I", len(tensors)))
    for _, arr in tensors:
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(data: bytes) -> Critic:
    """Rebuild a float32 critic from checkpoint bytes, verifying the header."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a critic checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    arch_hash = r.take(8)
    arch_len = r.u32()
    if arch_len > len(data):
        raise CheckpointError(f"corrupt architecture length field: {arch_len}")
    try:
        arch = CriticArchitecture.from_dict(json.loads(r.take(arch_len)))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable architecture block: {exc}") from exc
    if arch.hash() != arch_hash:
        raise CheckpointError("architecture hash mismatch")
    critic = Critic(arch, np.float32)
    tensors = critic.named_state()
    count = r.u32()
    if count != len(tensors):
        raise CheckpointError(f"checkpoint has {count} tensors, architecture needs {len(tensors)}")
    for name, arr in tensors:
        nbytes = r.u32()
        if nbytes != arr.size * 4:
            raise CheckpointError(
                f"tensor {name}: corrupt length field {nbytes}, expected {arr.size * 4}"
            )
        arr[...] = np.frombuffer(r.take(nbytes), dtype="<f4").reshape(arr.shape)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint body")
    return critic
