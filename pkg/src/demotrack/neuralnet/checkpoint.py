"""Binary checkpoint I/O.

Layout (little-endian): magic ``SVTC``, u32 version, u32 blob length, the
textual config blob (``key=value`` lines; training metadata under ``meta.``),
u32 record count, then per record: u16 name length, name bytes, u8 rank,
rank x u32 dims, f64 values.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, PolicyValueNet, parameter_shapes

MAGIC = b"SVTC"
VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be decoded or does not fit the target network."""


def encode_checkpoint(net: PolicyValueNet) -> bytes:
    blob = net.cfg.to_text() + "".join(f"meta.{k}={v}\n" for k, v in sorted(net.meta.items()))
    blob_bytes = blob.encode()
    out = [MAGIC, struct.pack("<II", VERSION, len(blob_bytes)), blob_bytes,
           struct.pack("<I", len(net.params))]
    for name in sorted(net.params):
        arr = np.ascontiguousarray(net.params[name], dtype="<f8")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode_checkpoint(raw: bytes) -> PolicyValueNet:
    try:
        return _decode(raw)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None


def _decode(raw: bytes) -> PolicyValueNet:
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    version, blob_len = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    blob = raw[pos:pos + blob_len].decode()
    pos += blob_len
    cfg = ModelConfig.from_text(blob)
    meta = {}
    for line in blob.splitlines():
        if line.startswith("meta."):
            k, v = line[5:].split("=", 1)
            meta[k] = v
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode()
        pos += nlen
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        end = pos + 8 * n
        if end > len(raw):
            raise CheckpointError(f"record {name!r} truncated")
        params[name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(dims).astype(np.float64)
        pos = end
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes after last record")
    _check_shapes(cfg, params)
    return PolicyValueNet(cfg, params, meta)


def _check_shapes(cfg: ModelConfig, params: dict[str, np.ndarray]) -> None:
    expected = parameter_shapes(cfg)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"parameter names differ from config (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(f"{name}: shape {params[name].shape} != {shape}")


def save_checkpoint(net: PolicyValueNet, path: str | Path) -> str:
    """Write ``net`` and return the sha256 digest of the file contents."""
    raw = encode_checkpoint(net)
    Path(path).write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def load_checkpoint(path: str | Path) -> PolicyValueNet:
    return decode_checkpoint(Path(path).read_bytes())


def load_into(net: PolicyValueNet, path: str | Path) -> None:
    """Replace ``net``'s parameters, refusing a checkpoint built for another config."""
    loaded = load_checkpoint(path)
    if loaded.cfg != net.cfg:
        raise CheckpointError(f"checkpoint config {loaded.cfg} does not match network {net.cfg}")
    net.params = loaded.params
    net.meta = loaded.meta


def checkpoint_digest(net: PolicyValueNet) -> str:
    return hashlib.sha256(encode_checkpoint(net)).hexdigest()
