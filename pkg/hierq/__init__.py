#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
About hierq
hierq simulates hierarchical federated learning with quantized model
aggregation: clients run local SGD, edge servers average quantized client
updates every tau1 iterations, and a cloud server averages quantized edge
updates every tau2 edge rounds. It also evaluates the closed-form convergence
bound of the scheme, optimizes the two aggregation intervals under a
wall-clock model, and adapts them during training.

Functions
- run_experiment: Common executional entry point from interfaces.
- run_single: One run of a sweep-free config.
- enumerate_combos: Cartesian product of sweep axes.
"""
import csv
import json
import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

from hierq.adaptive import adaptive_run
from hierq.config import apply_override, build_engine_config, validate_config
from hierq.definitions.abstractions import derive_seed
from hierq.definitions.constants import DIVERGED_MARKER, SUMMARY_COLUMNS, \
    TRACE_COLUMNS
from hierq.definitions.error import DivergenceError, OutputError
from hierq.engine import RunTrace, run_fedavg, run_hier_local_qsgd

logger = logging.getLogger(__name__)

SUMMARY_FILE = 'summary.csv'


def enumerate_combos(dict_with_lists):
    """Enumerate sweep point variants.

    Args:
        dict_with_lists (dict): Dotted config paths mapped to lists of values.

    Returns:
        list: A list of dicts, one per point of the Cartesian product, in
        row-major order of the axes as given.

    Examples:
        >>> enumerate_combos({'a': [1, 2], 'b': ['x']})
        [{'a': 1, 'b': 'x'}, {'a': 2, 'b': 'x'}]
        >>> enumerate_combos({})
        [{}]
    """
    axes = OrderedDict((k, v) for k, v in dict_with_lists.items())
    return [dict(zip(axes, values)) for values in product(*axes.values())]


def point_label(point):
    """Readable label of a sweep point.

    >>> point_label({'schedule.tau1': 50, 'q1': {'kind': 'identity'}})
    'schedule.tau1=50,q1={"kind":"identity"}'
    """
    return ','.join('{}={}'.format(
        k, json.dumps(v, sort_keys=True, separators=(',', ':'))
        if isinstance(v, (dict, list)) else v) for k, v in point.items())


def run_single(config, seed):
    """Run one sweep-free config with the given run seed.

    Args:
        config (ExperimentConfig): Validated config; its sweep is ignored.
        seed (int): Run seed.

    Returns:
        RunTrace
    """
    engine_config, partition = build_engine_config(config, seed)
    adaptive = config.adaptive
    if adaptive is not None and adaptive.enabled:
        trace = adaptive_run(engine_config, adaptive.window_seconds,
                             tau1_0=adaptive.tau1_initial, tau2=adaptive.tau2,
                             use_decay=adaptive.use_decay)
    elif config.algorithm == 'fedavg':
        trace = run_fedavg(engine_config)
    else:
        trace = run_hier_local_qsgd(engine_config)
    if partition is not None:
        trace.metadata['partition'] = partition.to_dict()
    return trace


@dataclass
class ResultSet:
    """Summary rows and traces of an experiment.

    Attributes:
        name (str): Experiment name.
        rows (list): One summary dict per run, keyed by SUMMARY_COLUMNS.
        traces (dict): (point, repetition) -> RunTrace.
        output_dir (str or None): Where the files were written.
    """
    name: str
    rows: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    output_dir: str = None

    def write_summary(self, path):
        try:
            with open(path, 'w', newline='') as file:
                writer = csv.DictWriter(file, fieldnames=SUMMARY_COLUMNS,
                                        lineterminator='\n')
                writer.writeheader()
                writer.writerows(self.rows)
        except OSError as err:
            raise OutputError('Cannot write summary {}: {}'.format(path, err),
                              path=str(path))

    @classmethod
    def load(cls, output_dir, name=None):
        """Read a ResultSet written by `run_experiment`."""
        path = os.path.join(output_dir, SUMMARY_FILE)
        try:
            with open(path, newline='') as file:
                rows = list(csv.DictReader(file))
            result = cls(name or os.path.basename(os.path.normpath(
                output_dir)), rows, {}, output_dir)
            for row in rows:
                trace = RunTrace()
                with open(os.path.join(output_dir, row['trace_file']),
                          newline='') as file:
                    for record in csv.DictReader(file):
                        trace.rows.append(_parse_trace_row(record))
                result.traces[(int(row['point']),
                               int(row['repetition']))] = trace
        except OSError as err:
            raise OutputError('Cannot read results in {}: {}'
                              .format(output_dir, err), path=str(output_dir))
        return result


def _parse_trace_row(record):
    row = {}
    for column in TRACE_COLUMNS:
        value = record.get(column, '')
        if value == '':
            row[column] = ''
        elif column in ('k', 't_total', 'tau1', 'tau2', 'uplink_bits'):
            row[column] = int(value)
        else:
            row[column] = float(value)
    return row


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise OutputError('Cannot create output directory {}: {}'
                          .format(path, err), path=str(path))
    if not os.access(path, os.W_OK):
        raise OutputError('Output directory {} is not writable.'
                          .format(path), path=str(path))


def run_experiment(config, output_dir=None):
    """Run every sweep point and repetition of an experiment.

    Run (point p, repetition r) uses the seed derived from (seed, p, r), so
    adding points or repetitions leaves other runs unchanged. Each run writes
    trace-pPPP-rRRR.csv and a .json metadata sidecar; the summary is written
    last, in (point, repetition) order. Diverged runs keep their partial trace
    and are marked in the summary.

    Args:
        config (ExperimentConfig): Validated config.
        output_dir (str or None): Overrides config.output_dir.

    Returns:
        ResultSet

    Raises:
        OutputError: Output directory cannot be written.
        ConfigurationError: A sweep point yields an invalid config.
    """
    output_dir = output_dir or config.output_dir
    _ensure_dir(output_dir)
    base = config.model_dump()
    base['sweep'] = {}
    points = enumerate_combos(config.sweep)
    point_configs = []
    for point in points:
        data = base
        for path, value in point.items():
            data = apply_override(data, path, value)
        point_configs.append(validate_config(data))
    tasks = [(p, r) for p in range(len(points))
             for r in range(config.repetitions)]

    def task(item):
        p, r = item
        seed = derive_seed(config.seed, p, r)
        logger.debug('Run point %d repetition %d seed %d', p, r, seed)
        diverged = False
        try:
            trace = run_single(point_configs[p], seed)
        except DivergenceError as err:
            logger.warning('Warning! Point %d repetition %d diverged in '
                           'round %s.', p, r, err.round)
            trace, diverged = err.trace, True
        stem = 'trace-p{:03d}-r{:03d}'.format(p, r)
        trace.metadata.update({
            'experiment': point_configs[p].model_dump(),
            'point': p, 'repetition': r, 'run_seed': seed,
            'label': point_label(points[p]), 'diverged': diverged})
        trace.write_csv(os.path.join(output_dir, stem + '.csv'))
        trace.write_metadata(os.path.join(output_dir, stem + '.json'))
        row = {'point': p, 'repetition': r, 'seed': seed,
               'label': point_label(points[p]), 'diverged': diverged,
               'trace_file': stem + '.csv'}
        row.update(trace.summary())
        if diverged:
            row['final_loss'] = DIVERGED_MARKER
            row['final_grad_norm_sq'] = DIVERGED_MARKER
        return row, trace

    if config.sweep_workers > 1:
        with ThreadPoolExecutor(max_workers=config.sweep_workers) as pool:
            outcomes = list(pool.map(task, tasks))
    else:
        outcomes = [task(item) for item in tasks]
    result = ResultSet(config.name, output_dir=output_dir)
    for (p, r), (row, trace) in sorted(zip(tasks, outcomes),
                                       key=lambda x: x[0]):
        result.rows.append(row)
        result.traces[(p, r)] = trace
    result.write_summary(os.path.join(output_dir, SUMMARY_FILE))
    return result
