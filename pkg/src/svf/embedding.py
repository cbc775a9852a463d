"""Sign-random-projection embeddings and the Hamming/cosine link.

For Gaussian ``A`` the normalized Hamming similarity of ``sign(A q)`` and
``sign(A k)`` concentrates around ``g(cos(q, k)) = 1 - arccos(cos)/pi``.
:func:`jl_error_experiment` and :func:`concentration_check` measure that
concentration by Monte Carlo.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from svf.errors import DomainError, ShapeMismatch, ZeroVector
from svf.tensor import SpikeTensor


@dataclass(frozen=True)
class ProjectionMatrix:
    A: np.ndarray  # [D, C]
    seed: int | None = None

    @classmethod
    def gaussian(cls, D: int, C: int, seed: int) -> ProjectionMatrix:
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(rng.standard_normal((D, C)), seed)

    @property
    def D(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ErrorRow:
    D: int
    num_pairs: int
    mean_error: float
    max_error: float
    std_error: float = 0.0


class ErrorCurve(list):
    """Rows of ``(D, num_pairs, mean_error, max_error)`` sorted by ``D``."""

    HEADER = ("D", "num_pairs", "mean_error", "max_error")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self:
            w.writerow([r.D, r.num_pairs, repr(r.mean_error), repr(r.max_error)])
        return buf.getvalue()

    def is_decreasing(self, sigmas: float = 3.0) -> bool:
        """Each mean below its predecessor, allowing ``sigmas`` standard errors."""
        for a, b in zip(self, self[1:]):
            se = math.sqrt((a.std_error ** 2) / a.num_pairs + (b.std_error ** 2) / b.num_pairs)
            if not b.mean_error < a.mean_error + sigmas * se:
                return False
        return True


def binarize(A, x) -> SpikeTensor:
    """Bit ``d`` is 1 iff ``(A x)[d] > 0``; ``sign(0)`` maps to 0."""
    A = A.A if isinstance(A, ProjectionMatrix) else np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != A.shape[1]:
        raise ShapeMismatch(f"projection {A.shape} cannot take input {x.shape}")
    if not np.any(x):
        raise ZeroVector("cannot embed the zero vector")
    return SpikeTensor.from_bits(A @ x > 0)


def _as_bits(x):
    if isinstance(x, SpikeTensor):
        return x.unpack().reshape(-1)
    return np.asarray(x, dtype=np.uint8).reshape(-1)


def hamming_similarity(q_s, k_s) -> float:
    """``1 - (differing bits) / D`` via popcount over packed words."""
    if isinstance(q_s, SpikeTensor) and isinstance(k_s, SpikeTensor):
        if q_s.size != k_s.size:
            raise ShapeMismatch(f"lengths differ: {q_s.size} vs {k_s.size}")
        q_s, k_s = q_s.reshape((q_s.size,)), k_s.reshape((k_s.size,))
        diff = int(np.bitwise_count(q_s.words ^ k_s.words).sum())
        return 1.0 - diff / q_s.size
    q, k = _as_bits(q_s), _as_bits(k_s)
    if q.shape != k.shape:
        raise ShapeMismatch(f"lengths differ: {q.size} vs {k.size}")
    return 1.0 - int(np.count_nonzero(q != k)) / q.size


def hamming_identity(q_s, k_s) -> float:
    """``1/2 + (2q - 1).(2k - 1) / (2D)``; agrees exactly with the popcount form."""
    q, k = _as_bits(q_s).astype(np.int64), _as_bits(k_s).astype(np.int64)
    if q.shape != k.shape:
        raise ShapeMismatch(f"lengths differ: {q.size} vs {k.size}")
    signed = int(np.dot(2 * q - 1, 2 * k - 1))
    return 0.5 + signed / (2 * q.size)


def cosine_similarity(q, k) -> float:
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape:
        raise ShapeMismatch(f"shapes differ: {q.shape} vs {k.shape}")
    nq, nk = np.linalg.norm(q), np.linalg.norm(k)
    if nq == 0 or nk == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(q @ k / (nq * nk), -1.0, 1.0))


def g_map(x):
    """``1 - arccos(x) / pi``; inputs within 1e-12 outside [-1, 1] are clamped."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + 1e-12):
        raise DomainError(f"g_map is defined on [-1, 1], got {x}")
    out = 1.0 - np.arccos(np.clip(arr, -1.0, 1.0)) / np.pi
    return float(out) if out.ndim == 0 else out


def _unit_pairs(rng, C, num_pairs):
    q = rng.standard_normal((num_pairs, C))
    k = rng.standard_normal((num_pairs, C))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    k /= np.linalg.norm(k, axis=1, keepdims=True)
    return q, k


def pair_errors(q, k, A) -> np.ndarray:
    """``|f_H(sign(Aq), sign(Ak)) - g(cos(q, k))|`` for each row pair."""
    A = A.A if isinstance(A, ProjectionMatrix) else A
    qb = q @ A.T > 0
    kb = k @ A.T > 0
    f_h = 1.0 - np.count_nonzero(qb != kb, axis=1) / A.shape[0]
    cos = np.sum(q * k, axis=1) / (np.linalg.norm(q, axis=1) * np.linalg.norm(k, axis=1))
    return np.abs(f_h - g_map(np.clip(cos, -1.0, 1.0)))


def _streams(seed, count):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


def jl_error_experiment(C: int, D_list, num_pairs: int, seed: int) -> ErrorCurve:
    """Mean and max of ``|f_H - g(f_C)|`` per embedding size, fresh ``A`` per size."""
    if C < 2:
        raise DomainError("C must be at least 2")
    D_list = sorted(int(d) for d in D_list)
    if not D_list or num_pairs < 1:
        raise DomainError("need at least one D and one pair")
    pair_rng, *proj_rngs = _streams(seed, 1 + len(D_list))
    q, k = _unit_pairs(pair_rng, C, num_pairs)
    curve = ErrorCurve()
    for D, rng in zip(D_list, proj_rngs):
        err = pair_errors(q, k, rng.standard_normal((D, C)))
        curve.append(ErrorRow(D, num_pairs, float(err.mean()), float(err.max()), float(err.std())))
    return curve


def concentration_bound(D: int, delta: float) -> float:
    return 2.0 * math.exp(-delta * delta * D)


def concentration_check(C: int, D: int, num_pairs: int, delta: float, seed: int):
    """Observed rate of ``|f_H - g(f_C)| > delta``.

    Returns ``(rate, bound, slack, ok)`` where ``ok`` means the rate is within
    the concentration bound plus three binomial standard deviations.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    pair_rng, proj_rng = _streams(seed, 2)
    q, k = _unit_pairs(pair_rng, C, num_pairs)
    err = pair_errors(q, k, proj_rng.standard_normal((D, C)))
    rate = float(np.count_nonzero(err > delta)) / num_pairs
    bound = concentration_bound(D, delta)
    p = min(bound, 1.0)
    slack = 3.0 * math.sqrt(p * (1.0 - p) / num_pairs)
    return rate, bound, slack, rate <= bound + slack
