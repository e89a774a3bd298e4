"""Bit-exact checkpointing of parameter stores and training progress.

Layout (all integers little-endian):

    magic b"KRCK" | u32 format version | u64 meta length | meta JSON
    | tensor payload | u32 CRC-32 of everything before it

The meta JSON is canonical (sorted keys, no whitespace) and carries the
run config, the vocabulary with its SHA-256, the per-phase epoch
counters (the whole RNG state, since every draw derives from seed and
counters), and a manifest of every tensor: name, shape, Adam step.  The
payload holds, per parameter in manifest order, the value tensor then
the first and second Adam moments, raw little-endian.

Saving a loaded checkpoint reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib

import numpy as np

from .errors import CheckpointError
from .params import ParameterStore

MAGIC = b"KRCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def vocab_sha256(tokens) -> str:
    return hashlib.sha256("\n".join(tokens).encode("utf-8")).hexdigest()


def _moment(t, like: np.ndarray) -> np.ndarray:
    return np.zeros_like(like) if t is None else t


def save_checkpoint(path, stores: dict[str, ParameterStore], config: dict,
                    vocab_tokens, counters: dict, extra: dict | None = None) -> None:
    meta = {
        "config": config,
        "counters": counters,
        "extra": extra or {},
        "stores": {},
        "vocab": list(vocab_tokens),
        "vocab_sha256": vocab_sha256(vocab_tokens),
    }
    chunks: list[bytes] = []
    for sname in sorted(stores):
        store = stores[sname]
        dtype_name = store.dtype.name
        if dtype_name not in _DTYPES:
            raise CheckpointError(f"unsupported store dtype {dtype_name}")
        wire = _DTYPES[dtype_name]
        manifest = []
        for p in store.parameters():
            manifest.append({"name": p.name, "shape": list(p.data.shape),
                             "step": p.step})
            chunks.append(np.ascontiguousarray(p.data, dtype=wire).tobytes())
            chunks.append(np.ascontiguousarray(_moment(p.m, p.data), dtype=wire).tobytes())
            chunks.append(np.ascontiguousarray(_moment(p.v, p.data), dtype=wire).tobytes())
        meta["stores"][sname] = {"dtype": dtype_name, "params": manifest}

    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<Q", len(meta_bytes))
    body = head + meta_bytes + b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path, expected_vocab_sha: str | None = None):
    """Returns (meta dict, {store name: ParameterStore}) or raises CheckpointError."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20:
        raise CheckpointError(f"{path}: truncated checkpoint (only {len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch; file corrupt or truncated")
    meta_len = struct.unpack("<Q", raw[8:16])[0]
    if 16 + meta_len > len(body):
        raise CheckpointError(f"{path}: truncated checkpoint metadata")
    meta = json.loads(body[16:16 + meta_len].decode("utf-8"))

    if meta.get("vocab_sha256") != vocab_sha256(meta.get("vocab", [])):
        raise CheckpointError(f"{path}: vocabulary digest mismatch inside checkpoint")
    if expected_vocab_sha is not None and meta["vocab_sha256"] != expected_vocab_sha:
        raise CheckpointError(
            f"{path}: checkpoint vocabulary {meta['vocab_sha256'][:12]}… does not "
            f"match the supplied vocabulary {expected_vocab_sha[:12]}…"
        )

    offset = 16 + meta_len
    stores: dict[str, ParameterStore] = {}
    for sname in sorted(meta["stores"]):
        entry = meta["stores"][sname]
        wire = _DTYPES[entry["dtype"]]
        itemsize = np.dtype(wire).itemsize
        store = ParameterStore(dtype=entry["dtype"])
        for spec in entry["params"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) if shape else 1
            block = n * itemsize
            arrays = []
            for _ in range(3):
                if offset + block > len(body):
                    raise CheckpointError(f"{path}: truncated tensor payload")
                arrays.append(np.frombuffer(body[offset:offset + block],
                                            dtype=wire).reshape(shape).copy())
                offset += block
            p = store.add(spec["name"], arrays[0])
            p.m = arrays[1].astype(store.dtype)
            p.v = arrays[2].astype(store.dtype)
            p.step = int(spec["step"])
        stores[sname] = store
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} unexpected trailing bytes")
    return meta, stores
