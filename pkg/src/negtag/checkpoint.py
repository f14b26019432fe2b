"""Binary checkpoint format.

Layout (little-endian)::

    b"JTAG" | version u16 | variant u8 | config length u32 | config JSON (UTF-8)
    then, until EOF, one record per tensor:
    name length u16 | name (UTF-8) | rank u8 | dims u32 * rank | float32 * prod(dims)

The config JSON holds the model configuration and the vocabulary.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Vocab
from .decoders import Model
from .encoder import ModelConfig, Variant
from .errors import DataError
from .io import atomic_write

MAGIC = b"JTAG"
VERSION = 1


def checkpoint_bytes(model: Model) -> bytes:
    config = {"model": model.config.to_dict(), "vocab": model.vocab.to_dict(), "seed": model.seed}
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<HB", VERSION, model.variant.code), struct.pack("<I", len(blob)), blob]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model: Model, path) -> None:
    atomic_write(path, checkpoint_bytes(model))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError("truncated checkpoint", self.path)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def done(self) -> bool:
        return self.pos >= len(self.buf)


def parse_checkpoint(buf: bytes, path=None) -> Model:
    r = _Reader(buf, path)
    if r.take(4) != MAGIC:
        raise DataError("not a JTAG checkpoint (bad magic)", path)
    version, code = r.unpack("<HB")
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version} (expected {VERSION})", path)
    (n,) = r.unpack("<I")
    try:
        config = json.loads(r.take(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt config block: {exc}", path) from exc
    cfg = ModelConfig.from_dict(config["model"])
    if code >= len(Variant) or Variant.from_code(code) is not cfg.variant:
        raise DataError(f"variant id {code} disagrees with config variant {cfg.variant.value}", path)
    vocab = Vocab.from_dict(config["vocab"])
    model = Model(cfg, vocab, seed=int(config.get("seed", 0)))
    seen = set()
    while not r.done:
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        if name not in model.params:
            raise DataError(f"unexpected tensor {name!r}", path)
        target = model.params[name]
        if target.data.shape != tuple(dims):
            raise DataError(f"tensor {name!r} has shape {tuple(dims)}, expected {target.data.shape}", path)
        target.data[...] = data.astype(target.data.dtype)
        seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise DataError(f"checkpoint is missing tensors: {sorted(missing)}", path)
    return model


def load_checkpoint(path) -> Model:
    return parse_checkpoint(Path(path).read_bytes(), path)
