"""Binary checkpoint container.

Layout, all integers little-endian:

    magic           4 bytes  b"LMFN"
    version         u32
    config length   u32, then that many bytes of canonical JSON
                    (sorted keys, no whitespace)
    tensor count    u32
    per tensor:     u32 name length, name bytes (UTF-8),
                    4 x u32 shape, float32-LE payload
    adam flag       u8 (0 or 1)
    if 1:           u32 step counter, then per tensor in the same order:
                    float32-LE first-moment payload, second-moment payload
    crc32           u32 over every preceding byte

Writes are canonical (fixed key order, fixed tensor order), so saving,
loading, and saving again produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .model import LmfnModel, ModelConfig

__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint", "restore_model"]

MAGIC = b"LMFN"
FORMAT_VERSION = 1


def _pack_u32(v: int) -> bytes:
    return struct.pack("<I", v)


def _payload(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(path, model: LmfnModel, optimizer=None) -> None:
    """Write model (and optionally Adam) state; same state, same bytes."""
    out = bytearray()
    out += MAGIC
    out += _pack_u32(FORMAT_VERSION)
    config_json = json.dumps(model.config.to_dict(), sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
    out += _pack_u32(len(config_json))
    out += config_json
    named = list(model.named_params())
    out += _pack_u32(len(named))
    for name, t in named:
        raw = name.encode("utf-8")
        out += _pack_u32(len(raw))
        out += raw
        out += struct.pack("<4I", *t.shape)
        out += _payload(t.data)
    if optimizer is None:
        out += b"\x00"
    else:
        if [id(p) for p in optimizer.params] != [id(t) for _, t in named]:
            raise ValueError("optimizer parameters are not the model's parameters "
                             "in registration order; cannot serialize its state")
        out += b"\x01"
        step, moments1, moments2 = optimizer.state_arrays()
        out += _pack_u32(step)
        for m, v in zip(moments1, moments2):
            out += _payload(m)
            out += _payload(v)
    out += _pack_u32(zlib.crc32(bytes(out)))
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError(f"checkpoint {self.path} is truncated")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        flat = np.frombuffer(self.take(4 * n), dtype="<f4")
        return flat.reshape(shape).astype(np.float32)


def load_checkpoint(path) -> dict:
    """Parse and verify a checkpoint file.

    Returns {"config": dict, "tensors": [(name, array)], "adam": None or
    {"t": int, "m": [array], "v": [array]}}.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ValueError(f"{path} failed its checksum; the file is corrupt")
    r = _Reader(blob[:-4], path)
    r.take(4)  # magic
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ValueError(f"{path} uses format version {version}; "
                         f"this build reads version {FORMAT_VERSION}")
    config = json.loads(r.take(r.u32()).decode("utf-8"))
    tensors = []
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = struct.unpack("<4I", r.take(16))
        tensors.append((name, r.array(shape)))
    adam = None
    if r.take(1) == b"\x01":
        step = r.u32()
        m, v = [], []
        for _, arr in tensors:
            m.append(r.array(arr.shape))
            v.append(r.array(arr.shape))
        adam = {"t": step, "m": m, "v": v}
    if r.pos != len(r.blob):
        raise ValueError(f"{path} has {len(r.blob) - r.pos} unexpected trailing bytes")
    return {"config": config, "tensors": tensors, "adam": adam}


def restore_model(path, seed: int = 0):
    """Rebuild the model a checkpoint describes and load its weights.

    Returns (model, adam_state) where adam_state is None or the dict from
    :func:`load_checkpoint`.
    """
    ckpt = load_checkpoint(path)
    model = LmfnModel(ModelConfig.from_dict(ckpt["config"]), seed=seed)
    named = list(model.named_params())
    stored = ckpt["tensors"]
    if [n for n, _ in named] != [n for n, _ in stored]:
        raise ValueError(f"{path} holds a different parameter set than its "
                         f"config builds; the file is inconsistent")
    for (_, t), (_, arr) in zip(named, stored):
        if t.shape != arr.shape:
            raise ValueError(f"{path}: stored shape {arr.shape} does not match "
                             f"built shape {t.shape}")
        t.data[...] = arr
    return model, ckpt["adam"]
