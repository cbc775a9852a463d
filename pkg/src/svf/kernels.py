"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback is used. ``SVF_BACKEND=python`` forces the fallback.
"""
import os

from svf import _fallback

fallback = _fallback
compiled = None

if os.environ.get("SVF_BACKEND", "").lower() != "python":
    try:
        from svf import _core as compiled
    except ImportError:  # extension not built
        compiled = None

impl = compiled if compiled is not None else fallback
BACKEND = impl.BACKEND


def threads():
    """Thread cap from ``SVF_THREADS`` (default: all cores)."""
    raw = os.environ.get("SVF_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def popcount_signed_matmul(a_words, bt_words, depth):
    return impl.popcount_signed_matmul(a_words, bt_words, depth, threads())


def signed_binary_t_matmul(k_bits, v_bits):
    return impl.signed_binary_t_matmul(k_bits, v_bits)


def signed_int_matmul(q_bits, m):
    return impl.signed_int_matmul(q_bits, m)


def int_binary_matmul(s, v_bits):
    return impl.int_binary_matmul(s, v_bits)


def binary_real_matmul(x_bits, w):
    return impl.binary_real_matmul(x_bits, w)


def lif_sequence(x, beta, threshold, reset_each_step=False, u0=None):
    return impl.lif_sequence(x, beta, threshold, reset_each_step, u0)
