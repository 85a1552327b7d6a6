"""Command-line front end: ``blockomp {rip,recover,verify,sweep,gen}``."""
import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .blocks import BlockLayout
from .errors import (
    BlockOMPError,
    BudgetExceeded,
    FormatError,
    InvalidSpec,
    ParseError,
    ValidationError,
    VerificationFailed,
)
from .experiments import (
    calibrate_epsilon,
    gen_block_sparse_signal,
    gen_matrix,
    lemma_suite,
    phase_sweep,
    score,
    verify_theorem1_exhaustive,
)
from .fileio import emit_results, read_config, read_matrix, read_vector, results_json, write_matrix, write_vector
from .numeric import coherence
from .pursuit import PursuitConfig, block_omp, omp
from .rip import DEFAULT_BUDGET, block_rip_constant_exact, theorem1_threshold

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_BUDGET = 5
EXIT_VERIFY = 6
EXIT_IO = 7
EXIT_NUMERIC = 8


def _color(text, code):
    if os.environ.get("NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _status(ok):
    return _color("PASS", "32") if ok else _color("FAIL", "31")


def _write(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_meta(out, kind, config, extra=None):
    """CSV cannot carry the run configuration, so it goes into a sidecar."""
    if out:
        _write(results_json(kind, None, config, extra), out + ".meta.json")


def _load_problem(args):
    """Resolve (matrix, layout, spec or None) from ``--matrix`` / ``--config``."""
    spec = read_config(args.config) if args.config else None
    if args.matrix:
        d = read_matrix(args.matrix)
    elif spec is not None:
        d = gen_matrix(spec, args.index)
    else:
        raise ValidationError("--matrix", "either --matrix or --config is required")
    block_len = args.d if args.d is not None else (spec.d if spec else 1)
    if d.shape[1] % block_len:
        raise ValidationError("--d", f"{d.shape[1]} columns are not a multiple of d={block_len}")
    return d, BlockLayout(d.shape[1], block_len), spec


def cmd_rip(args):
    d, layout, spec = _load_problem(args)
    orders = args.order or [min((spec.K if spec else 1) + 1, layout.m)]
    certs = [block_rip_constant_exact(d, layout, k, budget=args.budget, threads=args.threads) for k in orders]
    config = {"matrix": args.matrix, "d": layout.d, "orders": orders, "budget": args.budget,
              "spec": spec.to_dict() if spec else None, "index": args.index}
    extra = {"coherence": coherence(d)} if np.all(np.linalg.norm(d, axis=0) > 1e-12) else None
    _write(emit_results("rip", certs, args.format, config, extra), args.out)
    if args.format == "csv":
        _write_meta(args.out, "rip", config, extra)
    return EXIT_OK


def cmd_recover(args):
    d, layout, spec = _load_problem(args)
    x = None
    if args.signal:
        x = read_vector(args.signal)
        y = d @ x
    elif args.measurements:
        y = read_vector(args.measurements)
    elif spec is not None:
        x = gen_block_sparse_signal(spec, args.index).values
        y = d @ x
    else:
        raise ValidationError("--signal", "one of --signal, --measurements or --config is required")
    if args.max_iterations is not None:
        cap = args.max_iterations
    elif spec is not None:
        cap = spec.max_iterations or spec.K
    else:
        cap = max(1, d.shape[0] // layout.d)
    if args.algorithm == "omp":
        trace = omp(d, y, PursuitConfig(cap * layout.d))
        run_layout = BlockLayout(layout.n, 1)
    else:
        trace = block_omp(d, y, layout, PursuitConfig(cap))
        run_layout = layout

    lines = ["step chosen_block residual_norm"]
    lines += [f"{i} {s.chosen_block} {s.residual_norm:.12g}" for i, s in enumerate(trace.steps, start=1)]
    lines.append(f"termination {trace.termination.value}")
    result = None
    if x is not None:
        result = score(x, trace, run_layout)
        lines.append(f"exact {'true' if result.exact else 'false'}")
    if args.format == "json":
        doc = {
            "version": __version__,
            "config": {"algorithm": args.algorithm, "d": layout.d, "max_iterations": cap,
                       "spec": spec.to_dict() if spec else None, "index": args.index},
            "steps": [{"step": i, "chosen_block": s.chosen_block, "residual_norm": s.residual_norm}
                      for i, s in enumerate(trace.steps, start=1)],
            "termination": trace.termination.value,
            "estimate": trace.estimate.values.tolist(),
            "exact": result.exact if result else None,
        }
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        write_vector(trace.estimate.values, args.out)
    return EXIT_OK


def cmd_verify(args):
    d, layout, spec = _load_problem(args)
    k = args.K if args.K is not None else (spec.K if spec else 1)
    draws = args.draws if args.draws is not None else (spec.draws_per_support if spec else 20)
    seed = spec.seed if spec else 0
    scale = args.scale
    suite = lemma_suite(
        d, layout, k, seed=seed,
        lemma1_pairs=max(1, int(10_000 * scale)), corollary1_signals=max(1, int(1_000 * scale)),
        lemma3_draws=max(1, int(10 * scale)), identification_draws=max(1, int(10 * scale)),
        lemma4_signals=max(10, int(100_000 * scale)), budget=args.budget, threads=args.threads,
    )
    thm = verify_theorem1_exhaustive(d, layout, k, draws, seed=seed, budget=args.budget, threads=args.threads)

    rows = [f"{'check':<10} {'trials':>8} {'skipped':>8} {'max_violation':>16}  status"]
    for rid, rep in suite.reports.items():
        mv = f"{rep.max_violation:.6g}" if rep.trials else "n/a"
        rows.append(f"{rid:<10} {rep.trials:>8} {rep.skipped:>8} {mv:>16}  {_status(rep.passed)}")
    c = thm.certificate
    mode = _status(thm.passed) if thm.asserted else "REPORT"
    # For the recovery row the last numeric column counts failed trials.
    rows.append(f"{'T1':<10} {thm.trials:>8} {0:>8} {thm.trials - thm.successes:>16}  {mode}")
    rows.append(f"delta_{c.order} = {c.delta:.12g}, threshold = {c.theorem1_threshold:.12g}, "
                f"certified = {'true' if c.satisfied else 'false'}, "
                f"recovered {thm.successes}/{thm.trials} over {thm.supports_visited} supports")
    sys.stdout.write("\n".join(rows) + "\n")
    if args.out:
        doc = {
            "version": __version__,
            "config": {"K": k, "d": layout.d, "draws": draws, "seed": seed, "scale": scale,
                       "spec": spec.to_dict() if spec else None, "matrix": args.matrix, "index": args.index},
            "lemmas": {rid: rep.to_dict() for rid, rep in suite.reports.items()},
            "theorem1": thm.to_dict(),
        }
        _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    if args.assert_ and not (suite.passed and thm.passed):
        raise VerificationFailed("verification failed")
    return EXIT_OK


def cmd_sweep(args):
    spec = read_config(args.config)
    grid = phase_sweep(spec, threads=args.threads)
    _write(emit_results("sweep", grid, args.format, spec.to_dict()), args.out)
    if args.format == "csv":
        _write_meta(args.out, "sweep", spec.to_dict())
    return EXIT_OK


def cmd_gen(args):
    spec = read_config(args.config)
    if args.calibrate:
        eps, cert = calibrate_epsilon(spec, min(spec.K + 1, spec.M), theorem1_threshold(spec.K),
                                      index=args.index, budget=args.budget)
        spec = replace(spec, epsilon=eps)
        sys.stderr.write(f"epsilon {eps:.17g} delta {cert.delta:.12g}\n")
    if args.what == "signal":
        write_vector(gen_block_sparse_signal(spec, args.index).values, args.out or sys.stdout)
    else:
        write_matrix(gen_matrix(spec, args.index), args.out or sys.stdout)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="blockomp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, problem=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="support enumeration cap")
        p.add_argument("--index", type=int, default=0, help="trial index for generated inputs")
        if problem:
            p.add_argument("--matrix", help="matrix file")
            p.add_argument("--d", type=int, help="block length")

    p = sub.add_parser("rip", help="certify the (block) RIP constant of a matrix")
    common(p)
    p.add_argument("--order", type=int, action="append", help="order K (repeatable)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_rip)

    p = sub.add_parser("recover", help="run Block OMP or OMP and print the trace")
    common(p)
    p.add_argument("--signal", help="ground-truth signal file; y = D x")
    p.add_argument("--measurements", help="measurement vector file")
    p.add_argument("--algorithm", choices=("block", "omp"), default="block")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("verify", help="lemma suite and exhaustive recovery check")
    common(p)
    p.add_argument("--K", type=int, help="signal block sparsity")
    p.add_argument("--draws", type=int, help="coefficient draws per support")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on lemma trial counts")
    p.add_argument("--assert", dest="assert_", action="store_true", help="exit nonzero on any failure")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="phase-transition sweep of Block OMP vs OMP")
    common(p, problem=False)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a generated matrix or signal")
    common(p, problem=False)
    p.add_argument("--what", choices=("matrix", "signal"), default="matrix")
    p.add_argument("--calibrate", action="store_true",
                   help="bisect epsilon so the order-(K+1) constant meets the recovery threshold")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) in ("sweep", "gen") and not args.config:
        parser.error("--config is required")
    try:
        return args.func(args)
    except ParseError as exc:
        code, msg = EXIT_PARSE, f"parse error: {exc}"
    except (ValidationError, InvalidSpec) as exc:
        code, msg = EXIT_VALIDATION, f"invalid configuration: {exc}"
    except BudgetExceeded as exc:
        code, msg = EXIT_BUDGET, f"budget exceeded: {exc}"
    except VerificationFailed as exc:
        code, msg = EXIT_VERIFY, str(exc)
    except (FormatError, OSError) as exc:
        code, msg = EXIT_IO, f"i/o error: {exc}"
    except BlockOMPError as exc:
        code, msg = EXIT_NUMERIC, f"error: {exc}"
    sys.stderr.write(f"blockomp: {msg}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
