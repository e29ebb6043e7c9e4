"""Binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3    magic "RIFC"
    u32           format version (currently 1)
    u32           header length, then that many bytes of UTF-8 JSON
    u32           array count
    per array:    u16 name length, name bytes,
                  u8 ndim, ndim * u32 dims,
                  raw float32 data (row-major)
    u32           CRC-32 of everything after the magic

The JSON header carries the architecture config, training step, seed and a
free-form ``extra`` dict. Inference exports drop every array whose name
starts with ``teacher.`` or ``opt.``; what remains is exactly what the
interpolation pipeline needs.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import NetConfig
from .errors import CheckpointError

MAGIC = b"RIFC"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: NetConfig
    step: int
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def has_teacher(self) -> bool:
        return any(n.startswith("ifnet.teacher.") for n in self.params)


def save_checkpoint(path, params: dict, config: NetConfig, step: int, seed: int,
                    extra: dict | None = None) -> None:
    header = {
        "config": config.to_dict(),
        "step": int(step),
        "seed": int(seed),
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()

    body = io.BytesIO()
    body.write(struct.pack("<I", VERSION))
    body.write(struct.pack("<I", len(hbytes)))
    body.write(hbytes)
    body.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        a = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
        nb = name.encode()
        body.write(struct.pack("<H", len(nb)))
        body.write(nb)
        body.write(struct.pack("<B", a.ndim))
        for d in a.shape:
            body.write(struct.pack("<I", d))
        body.write(a.tobytes())
    blob = body.getvalue()
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(blob)
        f.write(struct.pack("<I", crc))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from e
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    payload = blob[4:-4]
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupted or truncated")

    buf = io.BytesIO(payload)

    def read(fmt):
        size = struct.calcsize(fmt)
        raw = buf.read(size)
        if len(raw) != size:
            raise CheckpointError(f"{path}: unexpected end of file")
        return struct.unpack(fmt, raw)

    (version,) = read("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = read("<I")
    try:
        header = json.loads(buf.read(hlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from e

    (count,) = read("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = read("<H")
        name = buf.read(nlen).decode()
        (ndim,) = read("<B")
        shape = tuple(read("<" + "I" * ndim)) if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        raw = buf.read(4 * n)
        if len(raw) != 4 * n:
            raise CheckpointError(f"{path}: array {name!r} truncated")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    return Checkpoint(
        params=params,
        config=NetConfig.from_dict(header["config"]),
        step=header["step"],
        seed=header["seed"],
        extra=header.get("extra", {}),
    )


def strip_for_inference(ckpt: Checkpoint) -> Checkpoint:
    """Drop teacher and optimizer arrays; the result serves interpolation only."""
    params = {n: a for n, a in ckpt.params.items()
              if not n.startswith("ifnet.teacher.") and not n.startswith("opt.")}
    cfg = NetConfig.from_dict(ckpt.config.to_dict())
    cfg.ifnet.teacher = None
    extra = {k: v for k, v in ckpt.extra.items() if k != "opt_step"}
    return Checkpoint(params, cfg, ckpt.step, ckpt.seed, extra)


def export_inference(src, dst) -> None:
    ckpt = strip_for_inference(load_checkpoint(src))
    save_checkpoint(dst, ckpt.params, ckpt.config, ckpt.step, ckpt.seed, ckpt.extra)
