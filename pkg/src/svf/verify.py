"""Exact-equivalence checks behind ``svf equiv-check``."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from svf.attention import hamming_preactivation
from svf.neuron import NeuronConfig, lif_run


@dataclass
class CheckResult:
    name: str
    cases: int
    mismatches: int = 0
    reproducer: str | None = None

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def _bitstr(row) -> str:
    return "".join(str(int(b)) for b in row)


def all_spike_vectors(D: int) -> np.ndarray:
    """Every ``{0,1}^D`` vector, one per row, in counting order."""
    codes = np.arange(2 ** D, dtype=np.uint64)
    return ((codes[:, None] >> np.arange(D, dtype=np.uint64)) & 1).astype(np.uint8)


def hamming_identity_check(q, k, tol=1e-12, name="hamming") -> CheckResult:
    """Row-wise popcount similarity against ``1/2 + signed dot / 2D`` for all (q, k) row pairs.

    Both the exact integer form ``D - 2 popcount(q ^ k) == signed dot`` and the
    float similarities (within ``tol``) must agree.
    """
    q = np.asarray(q, dtype=np.uint8)
    k = np.asarray(k, dtype=np.uint8)
    D = q.shape[1]
    qw = np.packbits(q, axis=1, bitorder="little")
    kw = np.packbits(k, axis=1, bitorder="little")
    diff = np.bitwise_count(qw[:, None, :] ^ kw[None, :, :]).sum(axis=2, dtype=np.int64)
    signed = (2 * q.astype(np.int64) - 1) @ (2 * k.astype(np.int64) - 1).T
    f_pop = 1.0 - diff / D
    f_id = 0.5 + signed / (2 * D)
    bad = (D - 2 * diff != signed) | (np.abs(f_pop - f_id) > tol)
    res = CheckResult(name, int(bad.size), int(bad.sum()))
    if res.mismatches:
        i, j = np.argwhere(bad)[0]
        res.reproducer = (f"D={D} q={_bitstr(q[i])} k={_bitstr(k[j])} popcount_sim={f_pop[i, j]!r} "
                          f"identity={f_id[i, j]!r}")
    return res


def _orders_differ(q, k_lin, k, v) -> bool:
    return not np.array_equal(hamming_preactivation(q, k_lin, v, "linear"),
                              hamming_preactivation(q, k, v, "quadratic"))


def shrink_sdha(q, k_lin, k, v):
    """Greedily drop query rows, key/value rows and channels while the orders still differ."""
    arrs = [q, k_lin, k, v]
    changed = True
    while changed:
        changed = False
        for axis_groups in (((0, 0),), ((1, 0), (2, 0), (3, 0)), ((0, 1), (1, 1), (2, 1)), ((3, 1),)):
            n = arrs[axis_groups[0][0]].shape[axis_groups[0][1]]
            i = 0
            while n > 1 and i < n:
                trial = list(arrs)
                for a, ax in axis_groups:
                    trial[a] = np.delete(trial[a], i, axis=ax)
                if _orders_differ(*trial):
                    arrs, n, changed = trial, n - 1, True
                else:
                    i += 1
    return arrs


def sdha_order_check(trials: int, max_len: int, max_dim: int, rng: np.random.Generator,
                     fault: bool = False, name="sdha_orders") -> CheckResult:
    """Linear and quadratic evaluation give identical pre-activations and spikes.

    Instances include all-zero and all-one query rows. With ``fault`` the
    first instance has one key bit flipped on the linear side only.
    """
    res = CheckResult(name, 0)
    for t in range(trials):
        L = int(rng.integers(1, max_len + 1))
        dh = int(rng.integers(1, max_dim + 1))
        p = rng.random()
        q = (rng.random((L, dh)) < p).astype(np.uint8)
        k = (rng.random((L, dh)) < rng.random()).astype(np.uint8)
        v = (rng.random((L, dh)) < rng.random()).astype(np.uint8)
        if L > 1:
            q[0] = 0
            q[-1] = 1
        k_lin = k
        if fault and t == 0:
            v[0, 0] = 1
            k_lin = k.copy()
            k_lin[0, 0] ^= 1
        lin = hamming_preactivation(q, k_lin, v, "linear")
        quad = hamming_preactivation(q, k, v, "quadratic")
        thr = 2 * dh  # u_th = 1 with scale 1 / (2 D_h)
        res.cases += 1
        if not (np.array_equal(lin, quad) and np.array_equal(lin > thr, quad > thr)):
            res.mismatches += 1
            if res.reproducer is None:
                sq, skl, sk, sv = shrink_sdha(q, k_lin, k, v)
                res.reproducer = (f"Q={[_bitstr(x) for x in sq]} K={[_bitstr(x) for x in sk]} "
                                  f"K(linear side)={[_bitstr(x) for x in skl]} "
                                  f"V={[_bitstr(x) for x in sv]} linear="
                                  f"{hamming_preactivation(sq, skl, sv, 'linear').tolist()} quadratic="
                                  f"{hamming_preactivation(sq, sk, sv, 'quadratic').tolist()}")
    return res


def lif_scale_check(trials: int, rng: np.random.Generator, T=16, width=8,
                    name="lif_threshold_scale") -> CheckResult:
    """Spikes with threshold scale ``s`` on ``x`` equal spikes with scale 1 on ``x / s``."""
    res = CheckResult(name, 0)
    for _ in range(trials):
        s = float(2.0 ** rng.uniform(-2, 2))
        beta = float(rng.uniform(0, 1))
        x = rng.normal(0.0, 2.0, (T, width))
        a, _ = lif_run(x, NeuronConfig(beta=beta, scale=s))
        b, _ = lif_run(x / s, NeuronConfig(beta=beta, scale=1.0))
        res.cases += 1
        if not np.array_equal(a, b):
            res.mismatches += 1
            if res.reproducer is None:
                t, i = np.argwhere(a != b)[0]
                res.reproducer = f"scale={s!r} beta={beta!r} first difference at t={t}, unit={i}"
    return res


def equivalence_suite(trials: int = 100, max_dims: int = 64, seed: int = 0,
                      fault: bool = False) -> list[CheckResult]:
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for D in range(1, min(6, max_dims) + 1):
        vecs = all_spike_vectors(D)
        out.append(hamming_identity_check(vecs, vecs, name=f"hamming_exhaustive_D{D}"))
    rand = CheckResult("hamming_random", 0)
    for _ in range(trials):
        D = int(rng.integers(1, max_dims + 1))
        q = (rng.random((1, D)) < 0.5).astype(np.uint8)
        k = (rng.random((1, D)) < 0.5).astype(np.uint8)
        r = hamming_identity_check(q, k)
        rand.cases += r.cases
        rand.mismatches += r.mismatches
        rand.reproducer = rand.reproducer or r.reproducer
    out.append(rand)
    out.append(sdha_order_check(trials, 64, max_dims, rng, fault))
    out.append(lif_scale_check(trials, rng))
    return out


def suite_to_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "cases", "mismatches", "status"])
    for r in results:
        w.writerow([r.name, r.cases, r.mismatches, "pass" if r.ok else "fail"])
    return buf.getvalue()
