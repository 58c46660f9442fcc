"""Binary named-tensor checkpoints.

Layout (little-endian)::

    b"VRED" | u32 version | u32 meta_len | meta (UTF-8 JSON, sorted keys)
    | u32 n_tensors | n x ( u16 name_len | name | u32 ndim | ndim x u32 dims | f32 payload )
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VRED"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Checkpoint bytes or tensor names do not match the expected format."""


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise CheckpointFormatError(f"checkpoint has no tensor {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode()
        parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(self.tensors))]
        for name, arr in self.tensors.items():
            raw_name = name.encode()
            arr = np.ascontiguousarray(arr, dtype="<f4")
            parts.append(struct.pack("<H", len(raw_name)))
            parts.append(raw_name)
            parts.append(struct.pack("<I", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if raw[:4] != MAGIC:
            raise CheckpointFormatError("bad magic; not a checkpoint")
        try:
            version, meta_len = struct.unpack_from("<II", raw, 4)
            if version != VERSION:
                raise CheckpointFormatError(f"unsupported checkpoint version {version}")
            pos = 12
            metadata = json.loads(raw[pos:pos + meta_len].decode())
            pos += meta_len
            (count,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            tensors: dict[str, np.ndarray] = {}
            for _ in range(count):
                (nlen,) = struct.unpack_from("<H", raw, pos)
                pos += 2
                name = raw[pos:pos + nlen].decode()
                pos += nlen
                (ndim,) = struct.unpack_from("<I", raw, pos)
                pos += 4
                dims = struct.unpack_from(f"<{ndim}I", raw, pos)
                pos += 4 * ndim
                n = int(np.prod(dims, dtype=np.int64))
                if pos + 4 * n > len(raw):
                    raise CheckpointFormatError(f"tensor {name!r} payload truncated")
                if name in tensors:
                    raise CheckpointFormatError(f"duplicate tensor name {name!r}")
                tensors[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
                pos += 4 * n
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatError(f"corrupt checkpoint: {e}") from None
        if pos != len(raw):
            raise CheckpointFormatError(f"{len(raw) - pos} trailing bytes")
        return cls(tensors, metadata)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
