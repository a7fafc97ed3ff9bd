"""Binary checkpoints.

Layout::

    b"TTCKPT1\\n"
    uint64 little-endian header length
    UTF-8 JSON header: {"config": RunConfig, "vocab": [...],
                        "params": [[id, shape], ...], "extra": {...}}
    float64 little-endian values of each parameter, row-major, in header order
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

MAGIC = b"TTCKPT1\n"


class CheckpointError(DataError):
    pass


@dataclass
class Checkpoint:
    config: dict
    vocab: list[str]
    params: "OrderedDict[str, np.ndarray]"
    extra: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config,
            "vocab": self.vocab,
            "params": [[pid, list(arr.shape)] for pid, arr in self.params.items()],
            "extra": self.extra,
        }
        hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
        body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in self.params.values())
        return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if not raw.startswith(MAGIC):
            raise CheckpointError("not a checkpoint (bad magic)")
        off = len(MAGIC)
        (hlen,) = struct.unpack_from("<Q", raw, off)
        off += 8
        try:
            header = json.loads(raw[off : off + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"corrupt checkpoint header: {e}") from None
        off += hlen
        params = OrderedDict()
        for pid, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            end = off + 8 * count
            if end > len(raw):
                raise CheckpointError(f"checkpoint truncated inside {pid!r}")
            params[pid] = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).astype(np.float64)
            off = end
        if off != len(raw):
            raise CheckpointError("trailing bytes after last parameter")
        return cls(header["config"], header["vocab"], params, header.get("extra", {}))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
