"""Dense real tensors and bit-packed spike tensors.

Real tensors are plain ``float64`` numpy arrays and integer tensors are
``int64`` arrays; only the spike carrier needs its own type. A
:class:`SpikeTensor` stores its last axis packed into little-endian 64-bit
words, row-major, with padding bits kept at zero so XOR/popcount kernels can
run over whole words.
"""
from __future__ import annotations

import math

import numpy as np

from svf import kernels
from svf.errors import NonBinaryInput, ShapeMismatch

WORD_BITS = 64


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeMismatch(f"extents must be >= 1, got {shape}")
    return shape


def _words_per_row(n: int) -> int:
    return -(-n // WORD_BITS)


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[-1]
    rows = bits.reshape(-1, n)
    padded = np.zeros((rows.shape[0], _words_per_row(n) * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = rows
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64)


class SpikeTensor:
    """Immutable binary tensor packed along its last axis."""

    __slots__ = ("shape", "words")

    def __init__(self, shape, words: np.ndarray):
        shape = _check_shape(shape)
        rows = math.prod(shape[:-1])
        words = np.ascontiguousarray(words, dtype=np.uint64).reshape(rows, _words_per_row(shape[-1]))
        tail = shape[-1] % WORD_BITS
        if tail and np.any(words[:, -1] >> np.uint64(tail)):
            raise NonBinaryInput("padding bits must be zero")
        words.flags.writeable = False
        self.shape = shape
        self.words = words

    @classmethod
    def from_bits(cls, bits) -> SpikeTensor:
        """Pack an array that is already known to be 0/1 valued."""
        bits = np.asarray(bits)
        if bits.ndim == 0:
            bits = bits.reshape(1)
        return cls(bits.shape, _pack_rows(bits.astype(np.uint8, copy=False)))

    @classmethod
    def zeros(cls, shape) -> SpikeTensor:
        shape = _check_shape(shape)
        return cls(shape, np.zeros((math.prod(shape[:-1]), _words_per_row(shape[-1])), np.uint64))

    def unpack(self) -> np.ndarray:
        n = self.shape[-1]
        raw = self.words.astype("<u8").view(np.uint8)
        bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :n]
        return bits.reshape(self.shape)

    def to_real(self) -> np.ndarray:
        return self.unpack().astype(np.float64)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def count(self) -> int:
        """Number of ones."""
        return int(np.bitwise_count(self.words).sum())

    def density(self) -> float:
        return self.count() / self.size

    def reshape(self, shape) -> SpikeTensor:
        return reshape(self, shape)

    def transpose(self, perm) -> SpikeTensor:
        return transpose_axes(self, perm)

    def __eq__(self, other):
        if not isinstance(other, SpikeTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.shape, self.words.tobytes()))

    def __repr__(self):
        return f"SpikeTensor(shape={self.shape}, ones={self.count()})"


def pack(values) -> SpikeTensor:
    """Pack a 0.0/1.0 valued array into a :class:`SpikeTensor`."""
    arr = np.asarray(values)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    bad = (arr != 0) & (arr != 1)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonBinaryInput(f"entry {idx} = {arr[idx]!r} is not 0 or 1")
    return SpikeTensor.from_bits(arr)


def unpack(x: SpikeTensor) -> np.ndarray:
    return x.unpack()


def signed_binary_matmul(a: SpikeTensor, b: SpikeTensor) -> np.ndarray:
    """Exact ``(2a - 1)(2b - 1)`` for ``a: [R, D]`` and ``b: [D, S]``.

    Evaluated as ``D - 2 * popcount(a_row XOR b_col)`` on packed words.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot contract {a.shape} with {b.shape}")
    bt = transpose_axes(b, (1, 0))
    return kernels.popcount_signed_matmul(a.words, bt.words, a.shape[1])


def matmul_real(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeMismatch("matmul needs at least 1-D operands")
    inner_a = a.shape[-1]
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if inner_a != inner_b:
        raise ShapeMismatch(f"cannot contract {a.shape} with {b.shape}")
    return np.matmul(a, b)


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if isinstance(x, SpikeTensor):
        shape = _check_shape(shape)
        if math.prod(shape) != x.size:
            raise ShapeMismatch(f"cannot reshape {x.shape} to {shape}")
        if shape[-1] == x.shape[-1]:
            return SpikeTensor(shape, x.words)
        return SpikeTensor.from_bits(x.unpack().reshape(shape))
    x = np.asarray(x)
    if math.prod(shape) != x.size:
        raise ShapeMismatch(f"cannot reshape {x.shape} to {shape}")
    return x.reshape(shape).copy()


def transpose_axes(x, perm):
    perm = tuple(int(p) for p in perm)
    ndim = x.ndim
    if sorted(perm) != list(range(ndim)):
        raise ShapeMismatch(f"invalid permutation {perm} for rank {ndim}")
    if isinstance(x, SpikeTensor):
        if perm[-1] == ndim - 1:
            # last axis stays put: permute whole packed rows
            rows = x.words.reshape(*x.shape[:-1], x.words.shape[-1])
            moved = np.transpose(rows, perm[:-1] + (ndim - 1,))
            return SpikeTensor(tuple(x.shape[p] for p in perm), moved)
        return SpikeTensor.from_bits(np.transpose(x.unpack(), perm))
    return np.ascontiguousarray(np.transpose(np.asarray(x), perm))
