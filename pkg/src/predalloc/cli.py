"""Command line entry point: generate, predict, solve-offline, run, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .core import AdAuctionInstance, InvalidInputError, Prediction
from .fileio import (
    dump,
    format_allocation,
    format_instance,
    format_prediction,
    read_allocation,
    read_instance,
    read_prediction,
)
from .generators import generate
from .harness import (
    ALGORITHMS,
    SweepConfig,
    config_from_options,
    emit_report,
    generator_from_options,
    parse_key_values,
    report_from_runs,
    run_single,
    run_sweep,
)
from .offline import fractional_opt, integral_opt
from .predictions import OracleConfig, oracle_metadata, perturb

EXIT_OK, EXIT_INVALID, EXIT_AUDIT = 0, 1, 2

_GEN_FLAGS = (
    "preset", "kind", "buyers", "items", "d_bound", "bidders_per_item", "lognormal_mu",
    "lognormal_sigma", "budget_fraction", "budget_mode", "budget_low", "budget_high",
    "price_low", "price_high",
)


def _globals() -> argparse.ArgumentParser:
    # defaults are suppressed so flags work both before and after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    p.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                   help="exit with code 2 when any audit fails")
    p.add_argument("--format", choices=("csv", "svg", "both"), default=argparse.SUPPRESS,
                   help="report formats (default both)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("generator")
    g.add_argument("--preset", help="instance1, instance2, instance3, instance4 or lognormal")
    g.add_argument("--kind", choices=("manual1", "random_bounded", "lognormal_auction"))
    for name in _GEN_FLAGS[2:]:
        g.add_argument("--" + name.replace("_", "-"), dest=name)


def build_parser() -> argparse.ArgumentParser:
    common = _globals()
    parser = argparse.ArgumentParser(
        prog="predalloc", description="Online budgeted allocation with predictions.", parents=[common]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a generated instance")
    p.add_argument("--config", help="key=value generator file")
    _add_generator_flags(p)

    p = sub.add_parser("predict", parents=[common], help="perturb the integral optimum")
    p.add_argument("instance")
    p.add_argument("--error-rate", type=float, required=True)
    p.add_argument("--base", help="base mapping as an allocation file (default: solve integral OPT)")
    p.add_argument("--time-budget", type=float, default=10.0)
    p.add_argument("--strict-alternatives", action="store_true")
    p.add_argument("--fixed-fraction", action="store_true")

    p = sub.add_parser("solve-offline", parents=[common], help="fractional (and integral) optimum")
    p.add_argument("instance")
    p.add_argument("--integral", action="store_true")
    p.add_argument("--time-budget", type=float, default=10.0)

    p = sub.add_parser("run", parents=[common], help="run one algorithm on one instance")
    p.add_argument("instance")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="algo1")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--prediction", help="prediction file (default: no prediction)")
    p.add_argument("--trace", help="write the step trace (JSON lines) here")

    p = sub.add_parser("sweep", parents=[common], help="grid sweep with audits and reports")
    p.add_argument("--config", help="key=value sweep file; flags override it")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--instance", help="instance file (instead of a generator)")
    p.add_argument("--etas", help="comma list or start:stop:step")
    p.add_argument("--error-rates", dest="error_rates")
    p.add_argument("--repetitions", "--reps", dest="repetitions")
    p.add_argument("--workers")
    p.add_argument("--time-budget", dest="time_budget")
    p.add_argument("--fixed-instance", dest="fixed_instance", choices=("true", "false"))
    p.add_argument("--ci", choices=("normal", "t"))
    _add_generator_flags(p)

    p = sub.add_parser("report", parents=[common], help="rebuild summary and plots from runs.csv")
    p.add_argument("runs", help="runs.csv written by a sweep")
    p.add_argument("--ci", choices=("normal", "t"), default="normal")
    return parser


def _opts(args: argparse.Namespace, keys) -> dict[str, str]:
    return {k: str(getattr(args, k)) for k in keys if getattr(args, k, None) is not None}


def _cmd_generate(args) -> int:
    opts = parse_key_values(Path(args.config).read_text()) if args.config else {}
    opts.update(_opts(args, _GEN_FLAGS))
    spec = generator_from_options(opts)
    if spec is None:
        raise InvalidInputError("nothing to generate: give --preset, --kind or --config")
    seed = getattr(args, "seed", None)
    if seed is not None:
        spec = spec.with_seed(seed)
    dump(format_instance(generate(spec)), getattr(args, "out", None))
    return EXIT_OK


def _cmd_predict(args) -> int:
    inst = read_instance(args.instance)
    if args.base:
        alloc = read_allocation(args.base, inst.n_buyers, inst.n_items)
        base = [0] * inst.n_items
        for i, j, x in alloc.entries():
            if i and x > 0.5:
                base[j] = i
        base_optimal = False
    else:
        sol = integral_opt(inst, args.time_budget)
        base, base_optimal = list(sol.mapping), sol.optimal
    mode = "auction" if isinstance(inst, AdAuctionInstance) else "bounded"
    cfg = OracleConfig(
        args.error_rate, getattr(args, "seed", 0), mode, args.strict_alternatives, args.fixed_fraction
    )
    pred = perturb(inst, base, cfg)
    dump(format_prediction(pred, oracle_metadata(cfg, base_optimal)), getattr(args, "out", None))
    return EXIT_OK


def _cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    frac = fractional_opt(inst)
    result: dict[str, object] = {"fractional": frac.value, "method": frac.method}
    sol = frac
    if args.integral:
        sol = integral_opt(inst, args.time_budget, fractional=frac)
        result.update(integral=sol.value, optimal=sol.optimal, integrality_gap=sol.integrality_gap)
    print(json.dumps(result, sort_keys=True))
    out = getattr(args, "out", None)
    if out:
        dump(format_allocation(sol.allocation), out)
    return EXIT_OK


def _cmd_run(args) -> int:
    inst = read_instance(args.instance)
    pred = read_prediction(args.prediction) if args.prediction else Prediction.none(inst.n_items)
    opt = fractional_opt(inst).value
    nums, audits = run_single(inst, args.algorithm, args.eta, pred, opt)
    if args.trace:
        _write_trace(inst, args, pred)
    out = getattr(args, "out", None)
    if out:
        dump(format_allocation(nums.pop("allocation")), out)
    else:
        nums.pop("allocation")
    nums.update(opt=opt, audits=audits)
    print(json.dumps(nums, sort_keys=True))
    if getattr(args, "strict", False) and not all(audits.values()):
        return EXIT_AUDIT
    return EXIT_OK


def _write_trace(inst, args, pred) -> None:
    from .ad_auctions import run_algorithm2
    from .bounded_alloc import run_algorithm1, run_waterfill

    if args.algorithm == "algo1":
        trace = run_algorithm1(inst, pred, args.eta).trace
    elif args.algorithm == "waterfill_baseline":
        trace = run_waterfill(inst).trace
    elif args.algorithm == "algo2":
        trace = run_algorithm2(inst, pred, max(args.eta, 1e-3)).trace
    else:
        raise InvalidInputError("follow_prediction has no trace")
    trace.write(args.trace)


def _cmd_sweep(args) -> int:
    opts = parse_key_values(Path(args.config).read_text()) if args.config else {}
    opts.update(
        _opts(args, ("algorithm", "etas", "error_rates", "repetitions", "workers", "time_budget",
                     "fixed_instance", "ci", "instance", *_GEN_FLAGS))
    )
    if "seed" in args:
        opts["seed"] = str(args.seed)
    config = config_from_options(opts)
    out = getattr(args, "out", None) or config.out_dir or "sweep_out"
    config = replace(config, out_dir=out)
    report = run_sweep(config)
    paths = emit_report(report, out, getattr(args, "format", "both"))
    for p in paths:
        print(p)
    if report.audit_failures:
        print(f"{report.audit_failures} run(s) failed at least one audit", file=sys.stderr)
        if getattr(args, "strict", False):
            return EXIT_AUDIT
    return EXIT_OK


def _cmd_report(args) -> int:
    report = report_from_runs(Path(args.runs).read_text(), args.ci)
    out = getattr(args, "out", None) or str(Path(args.runs).parent)
    for p in emit_report(report, out, getattr(args, "format", "both")):
        print(p)
    if getattr(args, "strict", False) and report.audit_failures:
        return EXIT_AUDIT
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "predict": _cmd_predict,
    "solve-offline": _cmd_solve,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (InvalidInputError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
