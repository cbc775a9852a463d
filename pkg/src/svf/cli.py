"""``svf`` command line.

Exit codes: 0 success, 1 usage or I/O error, 2 verification failure,
3 numerical divergence. CSV goes to ``--out`` or stdout.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from svf.errors import DivergenceError, SVFError

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_DIVERGED = 0, 1, 2, 3

TRAIN_THRESHOLDS = {
    "joint": (">=", 0.90),
    "hierarchical": (">=", 0.60),
    "factorized": (">=", 0.60),
    "neuron_level": (">=", 0.60),
    "spatial_only": ("<=", 0.60),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int_list(text):
    try:
        vals = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _config(path):
    from svf.config import WorkbenchConfig, load_config

    return load_config(path) if path else WorkbenchConfig()


# ---------------------------------------------------------------------------


def cmd_jl_verify(args) -> int:
    from svf.embedding import concentration_check, jl_error_experiment

    curve = jl_error_experiment(args.C, args.dims, args.pairs, args.seed)
    _emit(curve.to_csv(), args.out)
    rate, bound, slack, ok = concentration_check(args.C, max(args.dims), args.pairs, args.delta,
                                                 args.seed + 1)
    decreasing = curve.is_decreasing()
    print(f"mean error decreasing: {decreasing}", file=sys.stderr)
    print(f"violation rate at delta={args.delta}, D={max(args.dims)}: {rate} "
          f"(bound {bound:.3g} + slack {slack:.3g}): {ok}", file=sys.stderr)
    return EXIT_OK if decreasing and ok else EXIT_FAIL


def cmd_equiv_check(args) -> int:
    from svf.verify import equivalence_suite, suite_to_csv

    results = equivalence_suite(args.trials, args.max_dims, args.seed, fault=args.self_test)
    if args.out:
        _emit(suite_to_csv(results), args.out)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.cases} cases, {r.mismatches} mismatches")
        if r.reproducer:
            print(f"  reproducer: {r.reproducer}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


def cmd_attn_bench(args) -> int:
    from svf.attention import AttentionSpec
    from svf.cost import probe_to_csv, scaling_probe

    T_list = sorted(set(args.T_list))
    for T in T_list:  # validate every configuration up front
        AttentionSpec(variant=args.variant, score=args.score, T=T, N=args.N, D=args.D, heads=args.M)
    rows, slopes = scaling_probe(args.variant, args.score, T_list, args.N, args.D, args.M,
                                 seed=args.seed, baseline=len(T_list) > 1)
    _emit(probe_to_csv(rows, args.variant, args.score), args.out)
    for k, v in slopes.items() if len(T_list) > 1 else ():
        print(f"log-log slope {k}: {v:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_energy_report(args) -> int:
    from svf import svt1
    from svf.attention import AttentionWeights, space_time_attention
    from svf.cost import reports_from_counter, reports_to_csv
    from svf.counters import OpCounter
    from svf.tensor import SpikeTensor

    cfg = _config(args.config)
    spec = cfg.attention
    try:
        x = svt1.load(args.input)
    except (OSError, svt1.FormatError) as exc:
        print(f"cannot read input {args.input}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not isinstance(x, SpikeTensor):
        x = np.asarray(x)
    manifest = args.weights or cfg.cost.weights
    if manifest:
        try:
            arrays = {k: (v.to_real() if isinstance(v, SpikeTensor) else v)
                      for k, v in svt1.load_weights(manifest).items()}
        except (OSError, svt1.FormatError) as exc:
            print(f"cannot read weights {manifest}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        weights = AttentionWeights.from_arrays(spec.variant, arrays)
    else:
        weights = AttentionWeights.random(spec, cfg.cost.seed if args.seed is None else args.seed)
    counter = OpCounter()
    space_time_attention(x, spec, weights, counter)
    _emit(reports_to_csv(reports_from_counter(counter, cfg.cost.e_mac, cfg.cost.e_ac)), args.out)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from svf.attention import AttentionSpec
    from svf.toy import ToyTask, train_toy

    cfg = _config(args.config)
    tr = cfg.training
    epochs = tr.epochs if args.epochs is None else args.epochs
    seed = tr.seed if args.seed is None else args.seed
    variant = args.variant or cfg.attention.variant
    task = ToyTask(seed=seed, T=tr.T, size=tr.size, bar_width=tr.bar_width, n_train=tr.n_train,
                   n_test=tr.n_test)
    spec = AttentionSpec(variant=variant, score=cfg.attention.score, T=tr.T,
                         N=(tr.size // 4) ** 2, D=16, heads=2, neuron=cfg.neuron)
    try:
        result = train_toy(spec, task, epochs, seed, tr.lr, tr.momentum, tr.batch,
                           log=lambda e, l, a: print(f"epoch {e}: loss {l:.4f} acc {a:.4f}",
                                                     file=sys.stderr))
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    _emit(result.to_csv(), args.out)
    op, target = TRAIN_THRESHOLDS[variant]
    acc = result.final_accuracy
    ok = acc >= target if op == ">=" else acc <= target
    print(f"final accuracy {acc:.4f} (required {op} {target}): {'pass' if ok else 'fail'}",
          file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from svf.attention import SCORES, VARIANTS

    p = _Parser(prog="svf", description="Spike-driven space-time attention workbench.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    jl = sub.add_parser("jl-verify", help="binary-embedding error curve and concentration check")
    jl.add_argument("--dims", type=_int_list, default=[16, 64, 256, 1024])
    jl.add_argument("--pairs", type=_positive, default=10000)
    jl.add_argument("--C", type=_positive, default=64)
    jl.add_argument("--delta", type=float, default=0.1)
    jl.add_argument("--seed", type=int, default=0)
    jl.add_argument("--out")
    jl.set_defaults(func=cmd_jl_verify)

    eq = sub.add_parser("equiv-check", help="exact identity and rearrangement checks")
    eq.add_argument("--trials", type=_positive, default=100)
    eq.add_argument("--max-dims", type=_positive, default=64)
    eq.add_argument("--seed", type=int, default=0)
    eq.add_argument("--self-test", action="store_true", help="inject a one-bit fault")
    eq.add_argument("--out")
    eq.set_defaults(func=cmd_equiv_check)

    ab = sub.add_parser("attn-bench", help="op-count scaling over T")
    ab.add_argument("--variant", choices=VARIANTS, default="joint")
    ab.add_argument("--score", choices=SCORES, default="hamming")
    ab.add_argument("--T-list", dest="T_list", type=_int_list, default=[4, 8, 16, 32, 64])
    ab.add_argument("--N", type=_positive, default=16)
    ab.add_argument("--D", type=_positive, default=32)
    ab.add_argument("--M", type=_positive, default=1)
    ab.add_argument("--seed", type=int, default=0)
    ab.add_argument("--out")
    ab.set_defaults(func=cmd_attn_bench)

    er = sub.add_parser("energy-report", help="per-scope CostReport of one attention forward")
    er.add_argument("--config")
    er.add_argument("--input", required=True, help="SVT1 spikes [B, T, N, D]")
    er.add_argument("--weights", help="weight manifest (overrides [cost] weights)")
    er.add_argument("--seed", type=int, default=None)
    er.add_argument("--out")
    er.set_defaults(func=cmd_energy_report)

    tt = sub.add_parser("train-toy", help="train the moving-bar classifier")
    tt.add_argument("--variant", choices=VARIANTS, default=None)
    tt.add_argument("--epochs", type=_nonneg, default=None)
    tt.add_argument("--seed", type=int, default=None)
    tt.add_argument("--config")
    tt.add_argument("--out")
    tt.set_defaults(func=cmd_train_toy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SVFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
