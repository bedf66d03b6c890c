"""Checkpoint container: model parameters plus a config echo.

Layout (little-endian): magic "HKDCKPT1" | u32 version | u32 config length +
UTF-8 config text | u32 parameter count | per parameter u32 name length +
UTF-8 name + u32 rank + rank u32 dims + float32 payload in C order. The
config echo is the flat ``key=value`` text the run was launched with, stored
verbatim so a checkpoint is self-describing.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"HKDCKPT1"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Malformed checkpoint file."""


def save_checkpoint(path, named_params, config_text: str = ""):
    """named_params: ordered (name, Tensor-or-array) pairs."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        cfg_raw = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(cfg_raw)))
        f.write(cfg_raw)
        items = list(named_params)
        f.write(struct.pack("<I", len(items)))
        for name, param in items:
            data = np.asarray(getattr(param, "data", param), dtype=np.float32)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.astype("<f4", copy=False).tobytes(order="C"))


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    """Returns (config_text, {name: float32 array})."""
    with open(path, "rb") as f:
        if _read_exact(f, 8, "magic") != MAGIC:
            raise CheckpointFormatError(f"bad magic in {path}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4, "config length"))
        config_text = _read_exact(f, cfg_len, "config").decode("utf-8")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "parameter count"))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            shape = struct.unpack(f"<{rank}I",
                                  _read_exact(f, 4 * rank, f"dims of {name!r}"))
            n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(f, 4 * n_items, f"payload of {name!r}")
            if name in params:
                raise CheckpointFormatError(f"duplicate parameter {name!r}")
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape)
        trailing = f.read(1)
        if trailing:
            raise CheckpointFormatError("trailing bytes after last parameter")
    return config_text, params


def restore_model(model, params: dict):
    """Copy arrays into the model's named parameters, checking coverage."""
    named = dict(model.named_parameters())
    missing = sorted(set(named) - set(params))
    extra = sorted(set(params) - set(named))
    if missing or extra:
        raise CheckpointFormatError(
            f"parameter name mismatch: missing {missing[:3]}, extra {extra[:3]}")
    for name, tensor in named.items():
        stored = params[name]
        if tuple(stored.shape) != tuple(tensor.data.shape):
            raise CheckpointFormatError(
                f"shape mismatch for {name!r}: checkpoint {stored.shape} "
                f"vs model {tensor.data.shape}")
        tensor.data = stored.astype(tensor.data.dtype, copy=True)
