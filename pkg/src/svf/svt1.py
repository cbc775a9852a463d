"""SVT1 tensor container and the plain-text weight manifest.

Layout: ``b"SVT1"``, u8 dtype tag (0 = f64, 1 = bit-packed), u8 rank, rank
little-endian u64 extents, then the payload (little-endian f64 values, or the
packed u64 words of a :class:`SpikeTensor` with zero padding).
"""
from __future__ import annotations

import io
import os
import struct
from pathlib import Path

import numpy as np

from svf.errors import ShapeMismatch, SVFError
from svf.tensor import SpikeTensor, _words_per_row

MAGIC = b"SVT1"
DTYPE_F64 = 0
DTYPE_BITS = 1


class FormatError(SVFError, ValueError):
    pass


def dumps(tensor) -> bytes:
    buf = io.BytesIO()
    if isinstance(tensor, SpikeTensor):
        shape, tag, payload = tensor.shape, DTYPE_BITS, tensor.words.astype("<u8").tobytes()
    else:
        arr = np.asarray(tensor, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        shape, tag, payload = arr.shape, DTYPE_F64, arr.astype("<f8").tobytes()
    if len(shape) > 255:
        raise ShapeMismatch("rank above 255 cannot be encoded")
    buf.write(MAGIC)
    buf.write(struct.pack("<BB", tag, len(shape)))
    buf.write(struct.pack(f"<{len(shape)}Q", *shape))
    buf.write(payload)
    return buf.getvalue()


def loads(data: bytes):
    if len(data) < 6 or data[:4] != MAGIC:
        raise FormatError("missing SVT1 magic")
    tag, rank = struct.unpack_from("<BB", data, 4)
    if rank == 0:
        raise FormatError("rank 0 tensors are not allowed")
    off = 6 + 8 * rank
    if len(data) < off:
        raise FormatError("truncated header")
    shape = struct.unpack_from(f"<{rank}Q", data, 6)
    n = int(np.prod(shape))
    if tag == DTYPE_F64:
        expected = 8 * n
        if len(data) - off != expected:
            raise FormatError(f"payload is {len(data) - off} bytes, expected {expected}")
        return np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64).reshape(shape)
    if tag == DTYPE_BITS:
        rows = n // shape[-1]
        nw = _words_per_row(shape[-1])
        expected = 8 * rows * nw
        if len(data) - off != expected:
            raise FormatError(f"payload is {len(data) - off} bytes, expected {expected}")
        words = np.frombuffer(data, dtype="<u8", offset=off).astype(np.uint64).reshape(rows, nw)
        try:
            return SpikeTensor(shape, words)
        except SVFError as exc:
            raise FormatError(str(exc)) from exc
    raise FormatError(f"unknown dtype tag {tag}")


def save(path, tensor) -> None:
    Path(path).write_bytes(dumps(tensor))


def load(path):
    return loads(Path(path).read_bytes())


def save_weights(directory, weights: dict[str, object], manifest="manifest.txt") -> Path:
    """Write each tensor to ``<name>.svt1`` and a ``name=path`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in sorted(weights):
        fname = f"{name}.svt1"
        save(directory / fname, weights[name])
        lines.append(f"{name}={fname}")
    out = directory / manifest
    out.write_text("\n".join(lines) + "\n")
    return out


def load_weights(manifest_path) -> dict[str, object]:
    manifest_path = Path(manifest_path)
    weights = {}
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{manifest_path}:{lineno}: expected key=path")
        key, rel = (part.strip() for part in line.split("=", 1))
        target = Path(rel) if os.path.isabs(rel) else manifest_path.parent / rel
        weights[key] = load(target)
    return weights
