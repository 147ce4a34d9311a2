"""Binary dataset container plus JSON sidecar.

Layout (little-endian)::

    magic     8s  b"CHPRDSET"
    version   u32
    scenario  u32 length + utf-8 JSON
    frames    u32, n_slot u32, antennas u32
    table     frames x (split u8, velocity f32, pathgain_norm f32)
    data      frames x n_slot x antennas x (re f32, im f32)

The sidecar ``<file>.json`` repeats the scenario and records provenance,
split counts and the SHA-256 of the binary.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .channel import Dataset, ScenarioConfig

MAGIC = b"CHPRDSET"
VERSION = 1
_TABLE = np.dtype([("split", "u1"), ("velocity", "<f4"), ("pathgain_norm", "<f4")])


class DatasetFormatError(ValueError):
    pass


def dumps(ds: Dataset) -> bytes:
    scen = json.dumps(asdict(ds.scenario), sort_keys=True).encode()
    f, n, m = ds.frames.shape
    table = np.empty(f, dtype=_TABLE)
    table["split"] = ds.split
    table["velocity"] = ds.velocity
    table["pathgain_norm"] = ds.pathgain_norm
    data = np.empty((f, n, m, 2), dtype="<f4")
    data[..., 0] = ds.frames.real
    data[..., 1] = ds.frames.imag
    return b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(scen)), scen,
        struct.pack("<III", f, n, m),
        table.tobytes(),
        data.tobytes(),
    ])


def loads(raw: bytes, provenance: dict | None = None) -> Dataset:
    if raw[:8] != MAGIC:
        raise DatasetFormatError("not a chanpred dataset (bad magic)")
    pos = 8
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    (n_scen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    scenario = ScenarioConfig(**json.loads(raw[pos:pos + n_scen].decode()))
    pos += n_scen
    f, n, m = struct.unpack_from("<III", raw, pos)
    pos += 12
    table = np.frombuffer(raw, dtype=_TABLE, count=f, offset=pos)
    pos += table.nbytes
    expected = f * n * m * 2 * 4
    if len(raw) - pos != expected:
        raise DatasetFormatError(f"data section is {len(raw) - pos} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=pos).reshape(f, n, m, 2)
    frames = (data[..., 0] + 1j * data[..., 1]).astype(np.complex64)
    return Dataset(
        frames=frames,
        velocity=table["velocity"].astype(np.float64),
        pathgain_norm=table["pathgain_norm"].astype(np.float64),
        split=table["split"].copy(),
        scenario=scenario,
        provenance=provenance or {},
    )


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save(ds: Dataset, path, overwrite: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass overwrite/--force to replace it")
    raw = dumps(ds)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw)
    side = {
        "format": "chanpred-dataset",
        "version": VERSION,
        "scenario": asdict(ds.scenario),
        "provenance": ds.provenance,
        "split_counts": ds.split_counts(),
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def load(path) -> Dataset:
    path = Path(path)
    prov = {}
    side = sidecar_path(path)
    if side.exists():
        prov = json.loads(side.read_text()).get("provenance", {})
    return loads(path.read_bytes(), prov)
