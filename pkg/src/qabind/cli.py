"""Command-line interface.

Data goes to stdout or ``--out``; progress and diagnostics go to stderr.
Exit status: 0 success, 1 data/runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from .logo import average_weights, emit_weight_logo
from .model import QuboInstance, qubo_to_ising, read_model, scale_ising
from .pipeline import (DEFAULT_FOLDS, DEFAULT_LAMBDA_GRID, DEFAULT_THRESHOLDS,
                       CalibrationResult, ExperimentConfig, MethodKind, MethodSpec, Task,
                       calibrate, evaluate, read_weights_tsv, run_experiment,
                       train_instances, write_weights_tsv)
from .samplers import AnnealSchedule, brute_force_solve, simulated_anneal, simulated_quantum_anneal
from .seqdata import (SplitSpec, preprocess, read_encoded_tsv, read_tsv, train_test_split,
                      write_encoded_tsv)

log = logging.getLogger("qabind")

_DEFAULT_SCHEDULE = AnnealSchedule()


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _add_schedule_flags(p):
    d = _DEFAULT_SCHEDULE
    g = p.add_argument_group("annealing schedule")
    g.add_argument("--sweeps", type=int, default=d.sweeps, help="sweeps per read")
    g.add_argument("--reads", type=int, default=d.reads, help="independent reads")
    g.add_argument("--beta-initial", type=float, default=d.beta_initial, help="initial inverse temperature")
    g.add_argument("--beta-final", type=float, default=d.beta_final, help="final inverse temperature")
    g.add_argument("--gamma-initial", type=float, default=d.gamma_initial, help="initial transverse field (SQA)")
    g.add_argument("--gamma-final", type=float, default=d.gamma_final, help="final transverse field (SQA)")
    g.add_argument("--slices", type=int, default=d.trotter_slices, help="Trotter slices (SQA)")


def _schedule(args):
    return AnnealSchedule(args.sweeps, args.beta_initial, args.beta_final, args.reads,
                          args.gamma_initial, args.gamma_final, args.slices)


# -- subcommands -----------------------------------------------------------------

def cmd_preprocess(args):
    data = preprocess(read_tsv(args.input), args.window, args.log2)
    log.info("%d unique sequences of length %d", len(data), data.seq_length)
    if args.train_out or args.test_out:
        if not (args.train_out and args.test_out):
            raise ValueError("--train-out and --test-out must be given together")
        if args.seed is None:
            raise ValueError("--seed is required when splitting")
        train, test = train_test_split(data, SplitSpec(args.test_fraction, seed=args.seed))
        write_encoded_tsv(args.train_out, train)
        write_encoded_tsv(args.test_out, test)
        log.info("split: %d train, %d test", len(train), len(test))
        if args.out is None:
            return 0
    with _output(args.out) as fh:
        write_encoded_tsv(fh, data)
    return 0


def _method_from_args(args):
    kind = MethodKind(args.method)
    sched = _schedule(args) if kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO) else None
    k = args.ensemble_k if kind in (MethodKind.SA_QUBO, MethodKind.SQA_QUBO, MethodKind.EXACT_QUBO) else None
    return MethodSpec(kind, sched, k, args.external_command)


def cmd_calibrate(args):
    train = read_encoded_tsv(args.train)
    spec = SplitSpec(0.1, args.bag_fraction, 1, args.seed)
    calib = calibrate(train, _method_from_args(args), Task(args.task), spec,
                      args.lambda_grid, args.folds)
    log.info("chosen lambda=%g K=%s", calib.chosen_lambda, calib.chosen_K)
    with _output(args.out) as fh:
        fh.write(json.dumps(calib.to_dict(), indent=1, sort_keys=True) + "\n")
    return 0


def cmd_train(args):
    train = read_encoded_tsv(args.train)
    with open(args.calibration, encoding="utf-8") as fh:
        calib = CalibrationResult.from_dict(json.load(fh))
    if calib.method.kind is MethodKind.EXTERNAL:
        raise ValueError("external models produce predictions, not weights; use 'run'")
    spec = SplitSpec(0.1, args.bag_fraction, args.bag_count, args.seed)
    weights = train_instances(train, calib.method, calib, spec)
    with _output(args.out) as fh:
        write_weights_tsv(fh, weights)
    return 0


def cmd_evaluate(args):
    test = read_encoded_tsv(args.test)
    weights = read_weights_tsv(args.weights)
    exclude = read_encoded_tsv(args.exclude) if args.exclude else None
    report = evaluate(test, weights, args.thresholds, exclude=exclude)
    with _output(args.out) as fh:
        fh.write(report.to_tsv() if args.format == "tsv" else report.to_json())
    return 0


def cmd_run(args):
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output:
        cfg.output = args.output
    reports = run_experiment(cfg)
    log.info("wrote %d reports to %s", len(reports), cfg.output)
    return 0


def _load_ising(args):
    m = read_model(args.input, args.vartype)
    if isinstance(m, QuboInstance):
        m = qubo_to_ising(m)
    if not args.no_scale and (np.any(m.h) or m.J):
        m = scale_ising(m)
    return m


def cmd_sample(args):
    m = _load_ising(args)
    sampler = simulated_anneal if args.sampler == "sa" else simulated_quantum_anneal
    pool = sampler(m, _schedule(args), args.seed)
    with _output(args.out) as fh:
        pool.to_tsv(fh)
    return 0


def cmd_solve_exact(args):
    m = _load_ising(args)
    pool = brute_force_solve(m, keep=args.keep)
    with _output(args.out) as fh:
        pool.to_tsv(fh)
    return 0


def cmd_logo(args):
    logo = average_weights(read_weights_tsv(args.weights), args.length)
    svg, tsv = emit_weight_logo(logo, args.out)
    log.info("wrote %s and %s", svg, tsv)
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap on worker threads (default: all available cores)")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(
        prog="qabind", formatter_class=fmt,
        description="QUBO regression for TF-DNA binding: annealing samplers, "
                    "baselines and the calibrate/train/test protocol.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("preprocess", parents=[common], formatter_class=fmt,
                       help="truncate, merge duplicates, log-transform and encode sequences")
    p.add_argument("--input", required=True, help="TSV with sequence<TAB>value")
    p.add_argument("--window", type=int, default=None, help="central window to keep (default: full length)")
    p.add_argument("--log2", action="store_true", help="log2-transform the averaged values")
    p.add_argument("--out", default=None, help="encoded TSV (stdout if omitted and not splitting)")
    p.add_argument("--train-out", default=None, help="write the training partition here")
    p.add_argument("--test-out", default=None, help="write the test partition here")
    p.add_argument("--test-fraction", type=float, default=0.10, help="held-out fraction")
    p.add_argument("--seed", type=int, default=None, help="split seed (required with --train-out/--test-out)")
    p.set_defaults(func=cmd_preprocess)

    def method_flags(p):
        p.add_argument("--method", required=True, choices=[k.value for k in MethodKind])
        p.add_argument("--ensemble-k", type=int, default=None,
                       help="fix the ensemble size K for QUBO methods (default: calibrate K in 1..20)")
        p.add_argument("--external-command", default=None,
                       help="command template for the external method: {train} {predict} {out} {lambda} {seed}")
        _add_schedule_flags(p)

    p = sub.add_parser("calibrate", parents=[common], formatter_class=fmt,
                       help="Monte Carlo cross-validation over the lambda grid")
    p.add_argument("--train", required=True, help="encoded training TSV")
    p.add_argument("--task", choices=[t.value for t in Task], default="classify")
    p.add_argument("--bag-fraction", type=float, default=0.02, help="fraction used to fit each fold")
    p.add_argument("--lambda-grid", type=_float_list, default=DEFAULT_LAMBDA_GRID,
                   help="comma-separated lambda values")
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS, help="Monte Carlo folds")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None, help="calibration JSON (default stdout)")
    method_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt,
                       help="fit one model per bootstrap bag")
    p.add_argument("--train", required=True, help="encoded training TSV")
    p.add_argument("--calibration", required=True, help="JSON written by 'calibrate'")
    p.add_argument("--bag-fraction", type=float, default=0.02, help="bag size as a fraction of the training set")
    p.add_argument("--bag-count", type=int, default=50, help="number of bags (instances)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None, help="weights TSV (default stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], formatter_class=fmt,
                       help="AUPRC and Kendall tau of trained weights on a test set")
    p.add_argument("--test", required=True, help="encoded test TSV")
    p.add_argument("--weights", required=True, help="weights TSV written by 'train'")
    p.add_argument("--exclude", default=None, help="encoded training TSV; refuse if it overlaps the test set")
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_THRESHOLDS, help="percentiles")
    p.add_argument("--format", choices=["json", "tsv"], default="json")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], formatter_class=fmt,
                       help="full experiment from a key = value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output", default=None, help="override the config output directory")
    p.set_defaults(func=cmd_run)

    def model_input(p):
        p.add_argument("--input", required=True, help="QUBO/Ising text file")
        p.add_argument("--vartype", choices=["spin", "binary"], default=None,
                       help="override the file's '# vartype' comment (default: spin)")
        p.add_argument("--no-scale", action="store_true", help="skip rescaling h, J into [-1, 1]")
        p.add_argument("--out", default=None, help="pool TSV (default stdout)")

    p = sub.add_parser("sample", parents=[common], formatter_class=fmt,
                       help="anneal a QUBO/Ising instance; prints the solution pool")
    model_input(p)
    p.add_argument("--sampler", choices=["sa", "sqa"], default="sa")
    p.add_argument("--seed", type=int, required=True)
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("solve-exact", parents=[common], formatter_class=fmt,
                       help="exhaustive search (dim <= 24)")
    model_input(p)
    p.add_argument("--keep", type=int, default=None, help="only the lowest KEEP states")
    p.set_defaults(func=cmd_solve_exact)

    p = sub.add_parser("logo", parents=[common], formatter_class=fmt,
                       help="render the mean of weight vectors as an SVG weight logo")
    p.add_argument("--weights", required=True, help="weights TSV")
    p.add_argument("--length", type=int, required=True, help="sequence length L")
    p.add_argument("--out", required=True, help="SVG path; the TSV sidecar goes next to it")
    p.set_defaults(func=cmd_logo)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s: %(message)s", force=True)
    if args.threads is not None:
        import numba
        if args.threads < 1:
            print("qabind: error: --threads must be >= 1", file=sys.stderr)
            return 2
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    start = time.perf_counter()
    try:
        code = args.func(args)
    except Exception as exc:  # one-line diagnostic, no traceback
        print(f"qabind: error: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
