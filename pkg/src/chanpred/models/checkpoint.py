"""Binary model checkpoints.

Layout (little-endian)::

    magic    8s   b"CHPRCKPT"
    version  u32
    family   u16 length + utf-8
    config   u32 length + utf-8 JSON
    count    u32
    count x  name (u16 length + utf-8), ndim u8, dims u32[ndim], f32[prod(dims)]

Tensors appear in parameter declaration order.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .mar import MarModel
from .registry import build_model

MAGIC = b"CHPRCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(model) -> list[tuple[str, np.ndarray]]:
    if isinstance(model, MarModel):
        return list(model.named_arrays().items())
    return [(k, p.data) for k, p in model.named_parameters()]


def _config(model) -> dict:
    if isinstance(model, MarModel):
        return {"order": model.order, "meta": model.meta}
    return model.config_dict()


def dumps(model, extra: dict | None = None) -> bytes:
    buf = io.BytesIO()
    fam = model.family.encode()
    cfg = json.dumps({"config": _config(model), "extra": extra or {}}, sort_keys=True).encode()
    arrays = _arrays(model)
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<H", len(fam)) + fam)
    buf.write(struct.pack("<I", len(cfg)) + cfg)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def _read(fmt: str, buf: io.BytesIO):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def loads(data: bytes):
    """Return ``(model, extra)`` reconstructed from :func:`dumps` output."""
    buf = io.BytesIO(data)
    if buf.read(8) != MAGIC:
        raise CheckpointError("not a chanpred checkpoint (bad magic)")
    (version,) = _read("<I", buf)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = _read("<H", buf)
    family = buf.read(n).decode()
    (n,) = _read("<I", buf)
    header = json.loads(buf.read(n).decode())
    (count,) = _read("<I", buf)
    arrays = {}
    for _ in range(count):
        (n,) = _read("<H", buf)
        name = buf.read(n).decode()
        (ndim,) = _read("<B", buf)
        shape = _read(f"<{ndim}I", buf) if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        raw = buf.read(4 * size)
        if len(raw) != 4 * size:
            raise CheckpointError("truncated tensor data")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)

    cfg = header["config"]
    if family == "mar":
        model = MarModel(arrays["coefs"].astype(np.float64), arrays["intercept"].astype(np.float64),
                         meta=cfg.get("meta", {}))
    else:
        fixed = {"encoder_pe", "attention_order"}
        model = build_model(family, **{k: v for k, v in cfg.items() if k not in fixed})
        model.load_state_dict(arrays)
    return model, header.get("extra", {})


def save(model, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(model, extra))
    return path


def load(path):
    return loads(Path(path).read_bytes())
