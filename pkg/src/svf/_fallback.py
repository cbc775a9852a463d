"""Pure numpy implementations of the hot kernels.

Every function here mirrors one in ``_core.pyx`` with the same signature and
the same accumulation order, so integer results are identical and real
results are bit-identical as well.
"""
import numpy as np

BACKEND = "python"


def popcount_signed_matmul(a_words, bt_words, depth, threads=1):
    """``out[r, s] = depth - 2 * popcount(a[r] ^ bt[s])``."""
    a_words = np.ascontiguousarray(a_words, dtype=np.uint64)
    bt_words = np.ascontiguousarray(bt_words, dtype=np.uint64)
    out = np.empty((a_words.shape[0], bt_words.shape[0]), dtype=np.int64)
    for r in range(a_words.shape[0]):
        diff = np.bitwise_count(a_words[r][None, :] ^ bt_words).sum(axis=1, dtype=np.int64)
        out[r] = depth - 2 * diff
    return out


def signed_binary_t_matmul(k_bits, v_bits):
    """``(2K - 1)^T V`` with zero entries of ``V`` skipped.

    Returns the integer product and the number of accumulates performed.
    """
    k = np.asarray(k_bits, dtype=np.int64)
    v = np.asarray(v_bits, dtype=np.int64)
    out = (2 * k - 1).T @ v
    ops = int(np.count_nonzero(v)) * k.shape[1]
    return out, ops


def signed_int_matmul(q_bits, m):
    """``(2Q - 1) M``; a sign-flip accumulate per position, nothing skipped."""
    q = np.asarray(q_bits, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    out = (2 * q - 1) @ m
    return out, q.shape[0] * q.shape[1] * m.shape[1]


def int_binary_matmul(s, v_bits):
    """``S V`` for integer ``S`` and binary ``V``, skipping zeros of ``V``."""
    s = np.asarray(s, dtype=np.int64)
    v = np.asarray(v_bits, dtype=np.int64)
    return s @ v, int(np.count_nonzero(v)) * s.shape[0]


def binary_real_matmul(x_bits, w):
    """Spike-driven linear map: rows of ``w`` are summed where ``x`` fires."""
    x = np.asarray(x_bits, dtype=np.uint8)
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros((x.shape[0], w.shape[1]), dtype=np.float64)
    # same accumulation order as the compiled kernel (ascending input channel)
    for c in range(x.shape[1]):
        rows = np.nonzero(x[:, c])[0]
        if rows.size:
            out[rows] += w[c]
    return out, int(np.count_nonzero(x)) * w.shape[1]


def lif_sequence(x, beta, threshold, reset_each_step=False, u0=None):
    """Fold a soft-reset LIF neuron over axis 0 of ``x`` (shape ``[T, n]``)."""
    x = np.asarray(x, dtype=np.float64)
    steps = x.shape[0]
    u = np.zeros(x.shape[1:], dtype=np.float64) if u0 is None else np.array(u0, dtype=np.float64)
    spikes = np.empty(x.shape, dtype=np.uint8)
    for t in range(steps):
        if reset_each_step:
            u[...] = 0.0
        h = beta * u + x[t]
        s = h > threshold
        spikes[t] = s
        u = h - threshold * s
    return spikes, u
