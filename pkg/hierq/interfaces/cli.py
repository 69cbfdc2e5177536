#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Command Line Interface."""
import csv
import json
import logging
import math
import sys
from argparse import ArgumentParser, ArgumentTypeError
from copy import copy
from itertools import product

from hierq import ResultSet, run_experiment
from hierq.bound import BoundParams, compute_G, flip_threshold, \
    optimal_intervals, theorem1_rhs, theorem1_terms, time_budget_bound
from hierq.compare import AXES, GROUPINGS, METRICS, compare_runs, \
    final_rows, save_comparison, write_comparison
from hierq.config import apply_override, get_template_env, load_config, \
    validate_config
from hierq.definitions.abstractions import chain
from hierq.definitions.constants import BENCH_COLUMNS, LATENCY_PRESETS, \
    QUANTIZER_KINDS, SUBCOMMANDS
from hierq.definitions.error import ConditionViolatedError, \
    ConfigurationError, HierqException, InputError, OutputError
from hierq.latency import LatencyModel
from hierq.quantizers import QuantizerSpec, certify_assumption3
from hierq.rng import RngStream

BOUND_FIELDS = ('L', 'eta', 'sigma2', 'n', 's', 'tau1', 'tau2', 'q1', 'q2',
                'K', 'f0', 'f_star')
INT_FIELDS = ('n', 's', 'K')


def _experiment_fields(parser):
    """Add experiment config and override fields to parser.

    Args:
        parser (ArgumentParser): Argparse object.

    Returns:
        ArgumentParser: Argparse object.
    """
    parser.add_argument('config', help='Path to JSON experiment config.')
    out_help = 'Directory for traces and summary. Overrides output_dir.'
    parser.add_argument('-o', '--output-dir', help=out_help)
    parser.add_argument('-w', '--workers', type=int,
                        help='Threads simulating clients within a run.')
    parser.add_argument('--sweep-workers', type=int,
                        help='Runs executed concurrently.')
    parser.add_argument('--run-seed', type=int, help='Master seed.')
    parser.add_argument('--repetitions', type=int,
                        help='Repetitions per sweep point.')
    return parser


def _tau2(value):
    if value == 'auto':
        return value
    try:
        return int(value)
    except ValueError:
        raise ArgumentTypeError('expected an integer or \'auto\'')


def _adaptive_fields(parser):
    """Add adaptive interval fields to parser."""
    adaptive_help = 'Adapt tau1 once per wall-clock window. Needs a ' \
                    'latency model and --window-seconds or an adaptive ' \
                    'config section.'
    parser.add_argument('--adaptive', action='store_true', help=adaptive_help)
    parser.add_argument('--tau1-initial', type=int,
                        help='tau1 of the first window.')
    parser.add_argument('--window-seconds', type=float,
                        help='Wall-clock window length T0.')
    tau2_help = 'Fixed tau2: an integer, or \'auto\' to derive it from the ' \
                'upload delays.'
    parser.add_argument('--tau2', type=_tau2, help=tau2_help)
    return parser


def _latency_fields(parser):
    """Add latency constant fields to parser."""
    parser.add_argument('--latency-preset', choices=sorted(LATENCY_PRESETS),
                        help='Named latency constants.')
    parser.add_argument('--d-comp-seconds', type=float,
                        help='Seconds per local SGD iteration.')
    parser.add_argument('--d-de-seconds', type=float,
                        help='Seconds per client-to-edge upload.')
    parser.add_argument('--d-ec-seconds', type=float,
                        help='Seconds per edge-to-cloud upload.')
    return parser


def _bound_fields(parser):
    """Add convergence bound parameter fields to parser."""
    parser.add_argument('--params', help='JSON file with bound parameters; '
                                         'flags override its values.')
    helps = {
        'L': 'Smoothness constant.', 'eta': 'Step size.',
        'sigma2': 'Gradient noise variance.', 'n': 'Clients.',
        's': 'Edge servers.', 'tau1': 'Client-edge interval.',
        'tau2': 'Edge-cloud interval.', 'q1': 'Client-edge variance factor.',
        'q2': 'Edge-cloud variance factor.', 'K': 'Cloud rounds.',
        'f0': 'Initial loss.', 'f_star': 'Loss lower bound.'}
    for name in BOUND_FIELDS:
        parser.add_argument('--' + name.replace('_', '-'), dest=name,
                            type=int if name in INT_FIELDS else float,
                            help=helps[name])
    parser.add_argument('-T', '--budget-seconds', type=float,
                        help='Wall-clock budget for the budget bound.')
    return parser


def _bound_only_fields(parser):
    grid_help = 'Sweep a parameter, e.g. --grid tau1=1,2,5; repeatable. ' \
                'Writes one CSV row per grid point.'
    parser.add_argument('--grid', action='append', default=[],
                        help=grid_help)
    parser.add_argument('--csv', help='CSV path for the grid, \'-\' for '
                                      'STDOUT.')
    return parser


def _bench_fields(parser):
    """Add quantizer certification fields to parser."""
    parser.add_argument('--kind', choices=QUANTIZER_KINDS, required=True,
                        help='Quantizer kind.')
    parser.add_argument('--dim', type=int, required=True,
                        help='Vector dimension.')
    parser.add_argument('--r', type=int, help='Kept coordinates.')
    parser.add_argument('--levels', type=int, help='Rounding levels.')
    parser.add_argument('--bits', type=int,
                        help='Rounding bit width; sets levels = 2^(bits-1).')
    parser.add_argument('--draws', type=int, default=10 ** 5,
                        help='Samples per probe.')
    parser.add_argument('--probes', type=int, default=3,
                        help='Random Gaussian probes; the zero vector and the '
                             'all-ones vector are always added.')
    parser.add_argument('--seed', type=int, default=0, help='Master seed.')
    parser.add_argument('--csv', help='CSV report path; default STDOUT.')
    return parser


def _compare_fields(parser):
    """Add comparison fields to parser."""
    parser.add_argument('result_dirs', nargs='+',
                        help='Output directories of experiments.')
    parser.add_argument('-g', '--grouping', choices=GROUPINGS, default='set',
                        help='Pool per result set or per sweep point.')
    parser.add_argument('-a', '--axis', choices=AXES, default='k',
                        help='Checkpoint axis.')
    parser.add_argument('-m', '--metric', choices=METRICS, default='loss',
                        help='Trace column compared.')
    parser.add_argument('--csv', help='CSV path for the full table.')
    return parser


def _common_fields(parser):
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='Log debug messages to STDERR.')
    return parser


def _add_arguments(parser):
    """Add subcommands and their arguments to parser.

    Args:
        parser (ArgumentParser): Argparse object.

    Returns:
        ArgumentParser: Argparse object.
    """
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    funcs = {
        'run': [_common_fields, _experiment_fields, _adaptive_fields,
                _latency_fields],
        'sweep': [_common_fields, _experiment_fields, _latency_fields],
        'bound': [_common_fields, _bound_fields, _latency_fields,
                  _bound_only_fields],
        'plan': [_common_fields, _bound_fields, _latency_fields],
        'quantize-bench': [_common_fields, _bench_fields],
        'compare': [_common_fields, _compare_fields]
    }
    helps = {
        'run': 'Run one experiment config, ignoring its sweep axes.',
        'sweep': 'Run every sweep point and repetition of a config.',
        'bound': 'Evaluate the convergence bound.',
        'plan': 'Recommend aggregation intervals for a wall-clock budget.',
        'quantize-bench': 'Certify a quantizer by Monte-Carlo sampling.',
        'compare': 'Compare experiment results at matched checkpoints.'
    }
    for name in SUBCOMMANDS:
        chain(subparsers.add_parser(name, help=helps[name]),
              funcs=list(funcs[name]))
    return parser


def _override_experiment(args, sweep):
    """Load the config and apply CLI overrides."""
    config = load_config(args.config)
    data = config.model_dump()
    if not sweep:
        data['sweep'] = {}
    overrides = {
        'workers': args.workers,
        'sweep_workers': args.sweep_workers,
        'seed': args.run_seed,
        'repetitions': args.repetitions,
        'output_dir': args.output_dir,
    }
    latency = {
        'preset': args.latency_preset,
        'd_comp_seconds': args.d_comp_seconds,
        'd_de_seconds': args.d_de_seconds,
        'd_ec_seconds': args.d_ec_seconds,
    }
    latency = {k: v for k, v in latency.items() if v is not None}
    if latency:
        current = data.get('latency') or {}
        if 'preset' in latency or 'channel' in current:
            current = {}
        data['latency'] = {**current, **latency}
    if getattr(args, 'adaptive', False):
        adaptive = dict(data.get('adaptive') or {})
        adaptive['enabled'] = True
        if args.tau1_initial is not None:
            adaptive['tau1_initial'] = args.tau1_initial
        if args.window_seconds is not None:
            adaptive['window_seconds'] = args.window_seconds
        if args.tau2 is not None:
            adaptive['tau2'] = args.tau2
        data['adaptive'] = adaptive
    for path, value in overrides.items():
        if value is not None:
            data = apply_override(data, path, value)
    return validate_config(data)


def _run(args, sweep=False):
    config = _override_experiment(args, sweep)
    result = run_experiment(config)
    for row in result.rows:
        print('{trace_file}\tloss={final_loss}\trounds={rounds}\t'
              'wall_clock_s={wall_clock_s}'.format(**row))
    return result


def _bound_params(args):
    values = {}
    if args.params:
        try:
            with open(args.params) as file:
                values.update(json.load(file))
        except OSError as err:
            raise InputError('Cannot read parameters {}: {}'
                             .format(args.params, err))
        except json.JSONDecodeError as err:
            raise ConfigurationError('Parameters {} are not valid JSON: {}'
                                     .format(args.params, err))
    for name in BOUND_FIELDS:
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    unknown = sorted(set(values) - set(BOUND_FIELDS))
    if unknown:
        raise ConfigurationError('Unknown bound parameters: {}.'
                                 .format(', '.join(unknown)))
    missing = [name for name in ('L', 'eta', 'sigma2', 'n', 's')
               if name not in values]
    if missing:
        raise ConfigurationError('Missing bound parameters: {}.'
                                 .format(', '.join(missing)))
    return values


def _latency(args, required):
    values = dict(LATENCY_PRESETS[args.latency_preset]) \
        if args.latency_preset else {}
    for name in ('d_comp_seconds', 'd_de_seconds', 'd_ec_seconds'):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    if len(values) < 3:
        if required or values:
            raise ConfigurationError('Give --latency-preset or all of '
                                     '--d-comp-seconds, --d-de-seconds and '
                                     '--d-ec-seconds.')
        return None
    return LatencyModel(**values)


def _parse_grid(items):
    """Grid flags to an ordered list of (name, values).

    >>> _parse_grid(['tau1=1,2', 'q1=0.5'])
    [('tau1', [1.0, 2.0]), ('q1', [0.5])]
    """
    grid = []
    for item in items:
        name, sep, values = item.partition('=')
        if not sep or name not in BOUND_FIELDS:
            raise ConfigurationError('Bad grid axis \'{}\'; expected '
                                     'NAME=V1,V2 with NAME one of {}.'
                                     .format(item, ', '.join(BOUND_FIELDS)))
        cast = int if name in INT_FIELDS else float
        try:
            grid.append((name, [cast(v) for v in values.split(',')]))
        except ValueError:
            raise ConfigurationError('Bad grid values in \'{}\'.'
                                     .format(item))
    return grid


def _bound_row(p, latency, T):
    optimization, interval, noise = theorem1_terms(p)
    rhs = theorem1_rhs(p)
    row = {name: getattr(p, name) for name in BOUND_FIELDS}
    row.update({'G': rhs.G, 'valid': rhs.valid,
                'optimization': optimization, 'interval': interval,
                'noise': noise, 'rhs': rhs.value})
    if latency is not None and T is not None:
        row['budget_bound'] = time_budget_bound(
            p, latency.d_comp_seconds, latency.d_de_seconds,
            latency.d_ec_seconds, T)
    return row


def _write_grid(rows, path):
    fields = list(rows[0])
    if path == '-':
        writer = csv.DictWriter(sys.stdout, fieldnames=fields,
                                lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
        return
    try:
        with open(path, 'w', newline='') as file:
            writer = csv.DictWriter(file, fieldnames=fields,
                                    lineterminator='\n')
            writer.writeheader()
            writer.writerows(rows)
    except OSError as err:
        raise OutputError('Cannot write {}: {}'.format(path, err))


def _bound(args):
    values = _bound_params(args)
    p = BoundParams(**values)
    latency = _latency(args, required=False)
    T = args.budget_seconds
    if args.grid:
        grid = _parse_grid(args.grid)
        rows = []
        for combo in product(*(v for _, v in grid)):
            point = dict(values)
            point.update(zip((name for name, _ in grid), combo))
            rows.append(_bound_row(BoundParams(**point), latency, T))
        _write_grid(rows, args.csv or '-')
        return rows
    budget = optimal = optimal_error = None
    if latency is not None and T is not None:
        budget = {'T': T, 'd_comp': latency.d_comp_seconds,
                  'd_de': latency.d_de_seconds, 'd_ec': latency.d_ec_seconds,
                  'value': time_budget_bound(p, latency.d_comp_seconds,
                                             latency.d_de_seconds,
                                             latency.d_ec_seconds, T)}
        try:
            optimal = optimal_intervals(p, latency.d_de_seconds,
                                        latency.d_ec_seconds, T)
        except ConditionViolatedError as err:
            optimal_error = str(err)
    flip = flip_threshold(p.n, p.s)
    trend = 'larger tau1 loosens the bound' if p.q1 < flip else \
        'larger tau1 tightens the bound' if p.q1 > flip else \
        'the split does not matter'
    env = get_template_env()
    print(env.get_template('bound.txt.j2').render(
        p=p, rhs=theorem1_rhs(p), terms=theorem1_terms(p), flip=flip,
        trend=trend, budget=budget, optimal=optimal,
        optimal_error=optimal_error))
    return p


def _plan(args):
    p = BoundParams(**_bound_params(args))
    latency = _latency(args, required=True)
    T = args.budget_seconds
    if T is None:
        raise ConfigurationError('plan needs --budget-seconds.')
    optimal = optimal_intervals(p, latency.d_de_seconds, latency.d_ec_seconds,
                                T)
    if math.isinf(optimal.tau1):
        raise ConditionViolatedError('sigma2 = 0 leaves tau1 unbounded; '
                                     'choose tau1 manually.')
    tau1, tau2 = optimal.rounded
    round_time = latency.round_time(tau1, tau2)
    rounds = int(T // round_time) if round_time > 0 else 0
    G = compute_G(p.with_intervals(tau1, tau2))
    env = get_template_env()
    print(env.get_template('plan.txt.j2').render(
        p=p, latency=latency.to_dict(), T=T, optimal=optimal, tau1=tau1,
        tau2=tau2, round_time=round_time, rounds=rounds, G=G,
        valid=G >= 0))
    return tau1, tau2


def _bench(args):
    spec = QuantizerSpec.from_dict({'kind': args.kind, 'r': args.r,
                                    'levels': args.levels,
                                    'bits': args.bits}, args.dim)
    root = RngStream(args.seed)
    gen = root.child('probes').generator()
    probes = [[0.0] * args.dim, [1.0] * args.dim]
    probes += [gen.standard_normal(args.dim) for _ in range(args.probes)]
    report = certify_assumption3(spec, probes, args.draws,
                                 root.child('certify'))
    rows = report.rows()
    if args.csv:
        try:
            with open(args.csv, 'w', newline='') as file:
                writer = csv.DictWriter(file, fieldnames=BENCH_COLUMNS,
                                        lineterminator='\n')
                writer.writeheader()
                writer.writerows(rows)
        except OSError as err:
            raise OutputError('Cannot write {}: {}'.format(args.csv, err))
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=BENCH_COLUMNS,
                                lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    return report


def _compare(args):
    result_sets = [ResultSet.load(path) for path in args.result_dirs]
    rows = compare_runs(result_sets, grouping=args.grouping, axis=args.axis,
                        metric=args.metric)
    if args.csv == '-':
        write_comparison(rows, sys.stdout)
        return rows
    if args.csv:
        save_comparison(rows, args.csv)
    env = get_template_env()
    print(env.get_template('compare.txt.j2').render(
        rows=final_rows(rows), axis=args.axis, metric=args.metric,
        interpolated=any(row['interpolated'] for row in rows)))
    return rows


COMMANDS = {
    'run': _run,
    'sweep': lambda args: _run(args, sweep=True),
    'bound': _bound,
    'plan': _plan,
    'quantize-bench': _bench,
    'compare': _compare
}


def _configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        '%(levelname)s %(name)s: %(message)s'))
    root = logging.getLogger('hierq')
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.propagate = False


def cli(argv=None):
    """Command line interface for package.

    Side Effects: Executes program. Errors are printed to STDERR as JSON and
    exit with code 1.

    Command Syntax: python3 -m hierq <command> <options>

    Examples:
        # Runs the example config into results/basic.
        python3 -m hierq run configs/basic.json -o results/basic

        # Recommends intervals for a 10^5 s budget at the CIFAR-10 latencies.
        python3 -m hierq plan --L 1 --eta 0.01 --sigma2 1 --n 20 --s 4 \
            --latency-preset cifar10 -T 100000
    """
    prog_desc = 'Simulate and analyze hierarchical local SGD with ' \
                'quantized aggregation.'
    argparser = ArgumentParser(prog='hierq', description=prog_desc)
    parser = _add_arguments(copy(argparser))
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        COMMANDS[args.command](args)
    except HierqException as err:
        print(json.dumps(err.to_dict()), file=sys.stderr)
        sys.exit(1)


if __name__ == '__main__':
    cli()
