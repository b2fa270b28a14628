"""
splitcount command line

    python app.py count sat --cnf data/example.cnf --samples 10000 --rho 0.1 --runs 10
    python app.py count graph --degrees data/small_graph.txt --samples 50000 --rho 0.5
    python app.py count table --spec data/model1.json --branch column
    python app.py generate sat --vars 20 --clauses 80 --seed 7 --out random.cnf

Exit codes: 0 success, 1 estimator failure, 2 usage or input error.
"""
import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

from caprecap import estimate_caprecap, extended_cap_recap, suggest_estimator
from config import (CapRecapConfig, EcapConfig, SplitConfig, caprecap_defaults, ecap_defaults,
                    oracle_defaults, split_defaults)
from engine import RunResult, run_splitting
from errors import (BudgetExceeded, ConfigError, DegenerateInput, EstimatorError,
                    InfeasibleDegrees, InfeasibleMargins, IterationLimitExceeded, ParseError,
                    StagnationFailure, ZeroOverlap)
from models.base import CountingModel
from models.graph import GraphModel, load_degrees
from models.sat import SatModel, load_cnf, random_3sat, write_dimacs
from models.table import BRANCHES, TableModel, load_table_spec
from oracle import exact_count
from utils.helpers import configure_logging, derive_run_seed, log10_from_ln
from utils.report_export import TRACE_FORMATS, RunReport, emit_trace

logger = logging.getLogger(__name__)

ESTIMATORS = ('split', 'caprecap', 'ecap', 'auto')

EXIT_OK = 0
EXIT_ESTIMATOR = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigError, ParseError, InfeasibleDegrees, InfeasibleMargins, DegenerateInput,
                FileNotFoundError)

# Flags that cannot change any estimate stay out of the report echo
NON_RESULT_FLAGS = ('handler', 'threads', 'timings')


# ============================================
# Argument parsing
# ============================================

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)

    run = common.add_argument_group("splitting")
    run.add_argument("--samples", type=int, default=split_defaults.sample_size,
                     help="sample size N per iteration")
    run.add_argument("--rho", type=float, default=split_defaults.rho,
                     help="elite fraction, 0 < rho < 1")
    run.add_argument("--runs", type=int, default=1, help="independent runs")
    run.add_argument("--seed", type=int, default=split_defaults.seed,
                     help="base seed; run i uses seed + i")
    run.add_argument("--threads", type=int, default=split_defaults.threads,
                     help="worker threads for chain blocks (results do not depend on it)")
    run.add_argument("--max-iterations", type=int, default=split_defaults.max_iterations)
    run.add_argument("--boost-samples", type=int, default=None,
                     help="enlarged N once the target is --boost-trigger levels away")
    run.add_argument("--boost-trigger", type=int, default=split_defaults.boost_trigger)
    run.add_argument("--chain-thinning", type=int, default=split_defaults.chain_thinning,
                     help="Gibbs sweeps per recorded chain point")
    run.add_argument("--estimator", choices=ESTIMATORS, default='split',
                     help="final estimator; auto picks by the size of the product estimate")

    cap = common.add_argument_group("capture-recapture")
    cap.add_argument("--cap-n1", type=int, default=caprecap_defaults.n1)
    cap.add_argument("--cap-n2", type=int, default=caprecap_defaults.n2)
    cap.add_argument("--cap-chain-sweeps", type=int, default=caprecap_defaults.chain_sweeps,
                     help="sweeps per capture chain")
    cap.add_argument("--cap-thinning", type=int, default=caprecap_defaults.thinning,
                     help="record every k-th sweep state of a capture chain")
    cap.add_argument("--ecap-window-low", type=float, default=ecap_defaults.window_low)
    cap.add_argument("--ecap-window-high", type=float, default=ecap_defaults.window_high)
    cap.add_argument("--ecap-max-aux", type=int, default=ecap_defaults.max_aux)
    cap.add_argument("--ecap-trigger", type=int, default=ecap_defaults.trigger,
                     help="levels below the target at which --boost-samples takes over for ecap")
    cap.add_argument("--ecap-min-estimate", type=float, default=ecap_defaults.min_estimate)

    out = common.add_argument_group("output")
    out.add_argument("--trace", metavar="PATH", help="write per-iteration traces here")
    out.add_argument("--format", choices=TRACE_FORMATS, default='csv', help="trace format")
    out.add_argument("--report", metavar="PATH", help="write the run report (.json, .csv or .xlsx)")
    out.add_argument("--oracle", action="store_true",
                     help="compare against the exact count when the instance is small enough")
    out.add_argument("--timings", action="store_true",
                     help="include wall-clock seconds in machine-readable reports")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitcount",
        description="Approximate counting by adaptive splitting and capture-recapture")
    commands = parser.add_subparsers(dest="command", required=True)

    count = commands.add_parser("count", help="estimate the number of solutions")
    models = count.add_subparsers(dest="model", required=True)
    common = _common_flags()

    sat = models.add_parser("sat", parents=[common], help="3-SAT model in DIMACS CNF")
    sat.add_argument("--cnf", required=True, help="DIMACS CNF file")
    sat.set_defaults(handler=cmd_count)

    graph = models.add_parser("graph", parents=[common], help="graphs with a degree sequence")
    graph.add_argument("--degrees", required=True, help="degree sequence file")
    graph.set_defaults(handler=cmd_count)

    table = models.add_parser("table", parents=[common], help="binary contingency tables")
    table.add_argument("--spec", required=True, help='JSON file with "r" and "c" margins')
    table.add_argument("--branch", choices=BRANCHES, default=None,
                       help="margin enforced by the configuration space (default: the file's, else auto)")
    table.set_defaults(handler=cmd_count)

    generate = commands.add_parser("generate", help="write instances")
    kinds = generate.add_subparsers(dest="kind", required=True)
    gen_sat = kinds.add_parser("sat", help="uniform random 3-SAT formula")
    gen_sat.add_argument("--vars", type=int, required=True)
    gen_sat.add_argument("--clauses", type=int, required=True)
    gen_sat.add_argument("--seed", type=int, default=0)
    gen_sat.add_argument("-o", "--out", help="output file; stdout if not given")
    gen_sat.set_defaults(handler=cmd_generate_sat)

    return parser


# ============================================
# count
# ============================================

def load_model(args) -> CountingModel:
    """Parse the instance file named by the subcommand"""
    if args.model == 'sat':
        return SatModel(load_cnf(args.cnf))
    if args.model == 'graph':
        return GraphModel(load_degrees(args.degrees))
    return TableModel(load_table_spec(args.spec, branch=args.branch))


def configs_from_args(args):
    """SplitConfig, CapRecapConfig and EcapConfig from the flags, validated"""
    if args.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {args.runs}")

    split_cfg = SplitConfig(
        sample_size=args.samples,
        rho=args.rho,
        seed=args.seed,
        max_iterations=args.max_iterations,
        boost_sample_size=args.boost_samples,
        boost_trigger=args.boost_trigger,
        chain_thinning=args.chain_thinning,
        threads=args.threads,
    )
    cap_cfg = CapRecapConfig(n1=args.cap_n1, n2=args.cap_n2, chain_sweeps=args.cap_chain_sweeps,
                             thinning=args.cap_thinning)
    ecap_cfg = replace(
        ecap_defaults,
        window_low=args.ecap_window_low,
        window_high=args.ecap_window_high,
        max_aux=args.ecap_max_aux,
        trigger=args.ecap_trigger,
        min_estimate=args.ecap_min_estimate,
    )

    # The ecap trigger decides where the boosted sample size kicks in
    if args.estimator == 'ecap':
        split_cfg = replace(split_cfg, boost_trigger=ecap_cfg.trigger)

    return split_cfg.validate(), cap_cfg.validate(), ecap_cfg.validate()


def config_echo(args, model: CountingModel) -> Dict:
    """Every flag plus the resolved instance description"""
    echo = {key: value for key, value in sorted(vars(args).items()) if key not in NON_RESULT_FLAGS}
    echo['instance'] = {key: value for key, value in model.descriptor.items()}
    echo['log_space_size'] = model.log_space_size
    return echo


def trace_path(path: str, run: int, runs: int) -> Path:
    """PATH for a single run, PATH stem + .runK + suffix otherwise"""
    path = Path(path)
    if runs == 1:
        return path
    return path.with_name(f"{path.stem}.run{run + 1}{path.suffix}")


def _resolve_estimator(requested: str, model: CountingModel, log_estimate: float) -> str:
    if requested != 'auto':
        return requested
    chosen = suggest_estimator(log_estimate)
    if chosen == 'caprecap' and not model.moves_at_target:
        # Chains frozen on X* only resample the final elites
        chosen = 'split'
    if chosen == 'ecap' and not isinstance(model, SatModel):
        # Auxiliary clauses only exist for SAT; the product estimate stands
        chosen = 'split'
    logger.info("auto estimator: %s for a product estimate of 10^%.2f", chosen,
                log10_from_ln(log_estimate))
    return chosen


def estimate_run(model: CountingModel, result: RunResult, estimator: str,
                 cap_cfg: CapRecapConfig, ecap_cfg: EcapConfig, threads: int) -> Dict:
    """Apply the final estimator to a finished splitting run; returns the report row fields"""
    row = {
        'estimator': estimator,
        'status': 'ok',
        'split_log_estimate': result.log_estimate,
        'log_estimate': result.log_estimate,
        'overlap': None,
        'chapman_std_error': None,
        'tau': None,
        'c_hat_aux': None,
    }
    if estimator == 'split':
        return row

    try:
        if estimator == 'caprecap':
            cap = estimate_caprecap(model, result.final_batch, cap_cfg, seed=result.seed,
                                    threads=threads)
        else:
            ecap = extended_cap_recap(model, result.final_batch, cap_cfg, ecap_cfg,
                                      seed=result.seed, threads=threads,
                                      product_log_estimate=result.log_estimate)
            row.update(tau=ecap.tau, c_hat_aux=ecap.c_hat_aux)
            cap = ecap.inner
            row['log_estimate'] = ecap.log_estimate
    except ZeroOverlap as e:
        logger.warning("run with seed %d: %s", result.seed, e)
        cap = e.result
        row['status'] = 'zero_overlap'
        if estimator == 'caprecap':
            row['log_estimate'] = cap.log_estimate
        return dict(row, overlap=cap.overlap if cap else 0)

    row.update(overlap=cap.overlap, chapman_std_error=cap.standard_error)
    if estimator == 'caprecap':
        row['log_estimate'] = cap.log_estimate
    return row


def cmd_count(args) -> int:
    model = load_model(args)
    split_cfg, cap_cfg, ecap_cfg = configs_from_args(args)

    if args.estimator == 'ecap' and not isinstance(model, SatModel):
        raise ConfigError("the extended estimator adds 3-SAT clauses and needs a sat instance")
    if args.estimator == 'caprecap' and not model.moves_at_target:
        raise ConfigError("capture-recapture needs chains that move on the solution set; "
                          f"use --estimator split for {args.model} instances")

    report = RunReport(
        command=f"count {args.model}",
        config=config_echo(args, model),
        include_timings=args.timings,
    )

    if args.oracle:
        try:
            report.exact_count = exact_count(model, oracle_defaults)
            logger.info("exact count: %d", report.exact_count)
        except BudgetExceeded as e:
            logger.warning("oracle skipped: %s", e)

    for run in range(args.runs):
        seed = derive_run_seed(args.seed, run)
        started = time.perf_counter()
        try:
            result = run_splitting(model, split_cfg.with_seed(seed))
        except (IterationLimitExceeded, StagnationFailure) as e:
            if args.trace:
                emit_trace(e.traces, args.format, trace_path(args.trace, run, args.runs))
            raise

        estimator = _resolve_estimator(args.estimator, model, result.log_estimate)
        row = estimate_run(model, result, estimator, cap_cfg, ecap_cfg, split_cfg.threads)
        log_estimate = row['log_estimate']

        report.add_run({
            'run': run,
            'seed': seed,
            'iterations': result.iterations,
            'log_estimate': log_estimate,
            'log10_estimate': log10_from_ln(log_estimate),
            'estimate': math.exp(log_estimate) if log_estimate < 709 else float('inf'),
            **{key: value for key, value in row.items() if key != 'log_estimate'},
            'wall_time': time.perf_counter() - started,
        }, result.traces)

        if args.trace:
            emit_trace(result.traces, args.format, trace_path(args.trace, run, args.runs))

    sys.stdout.write(report.render_human())
    if args.report:
        report.save(args.report)

    return EXIT_OK


# ============================================
# generate
# ============================================

def cmd_generate_sat(args) -> int:
    if args.vars < 3 or args.clauses < 1:
        raise ConfigError("need at least 3 variables and 1 clause")
    inst = random_3sat(args.vars, args.clauses, args.seed)
    comment = f"random 3-SAT, n={args.vars}, m={args.clauses}, seed={args.seed}"

    if args.out:
        with open(args.out, 'w') as f:
            write_dimacs(inst, f, comment)
    else:
        write_dimacs(inst, sys.stdout, comment)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return args.handler(args)
    except USAGE_ERRORS as e:
        parser.print_usage(sys.stderr)
        print(f"splitcount: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EstimatorError as e:
        print(f"splitcount: estimator failed: {e}", file=sys.stderr)
        return EXIT_ESTIMATOR
    except OSError as e:
        print(f"splitcount: {e}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":
    sys.exit(main())
