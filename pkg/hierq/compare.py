"""Comparison of experiment results at matched checkpoints."""
import csv
import logging
from collections import OrderedDict

import numpy as np

from hierq.definitions.constants import COMPARE_COLUMNS, TRACE_COLUMNS
from hierq.definitions.error import ConfigurationError, OutputError

logger = logging.getLogger(__name__)

GROUPINGS = ('set', 'point')
AXES = ('k', 'wall_clock_s', 't_total', 'uplink_bits')
METRICS = tuple(column for column in TRACE_COLUMNS if column not in AXES)


def _is_diverged(row):
    value = row.get('diverged', False)
    if isinstance(value, str):
        return value.strip().lower() == 'true'
    return bool(value)


def _groups(result_sets, grouping):
    """Group name -> list of traces of non-diverged runs."""
    groups = OrderedDict()
    for result in result_sets:
        for row in result.rows:
            if grouping == 'set':
                name = result.name
            else:
                name = '{}:{}'.format(result.name, row['label'] or
                                      'p{}'.format(row['point']))
            traces = groups.setdefault(name, [])
            if _is_diverged(row):
                continue
            traces.append(result.traces[(int(row['point']),
                                         int(row['repetition']))])
    return groups


def _metric_values(trace, metric, group):
    """Metric column of a trace as floats.

    Raises:
        ConfigurationError: A checkpoint has no numeric value, e.g.
            'q2_error_sq' of a run recorded without diagnostics.
    """
    values = []
    for value in trace.column(metric):
        try:
            values.append(float(value))
        except (TypeError, ValueError):
            raise ConfigurationError(
                'Metric \'{}\' has non-numeric value {!r} in group \'{}\'.'
                .format(metric, value, group))
    return np.asarray(values, dtype=np.float64)


def _common_grid(curves):
    """Checkpoint grid shared by all curves, and whether it was interpolated.

    Identical grids are used as they are. Otherwise the grid with the fewest
    checkpoints is kept, restricted to the range every curve covers.
    """
    first = curves[0][0]
    if all(len(x) == len(first) and np.array_equal(x, first)
           for x, _ in curves):
        return first, False
    coarsest = min((x for x, _ in curves), key=len)
    low = max(x[0] for x, _ in curves)
    high = min(x[-1] for x, _ in curves)
    grid = coarsest[(coarsest >= low) & (coarsest <= high)]
    if grid.size == 0:
        raise ConfigurationError('Runs share no checkpoint range on the '
                                 'compared axis.')
    return grid, True


def compare_runs(result_sets, grouping='set', axis='k', metric='loss'):
    """Mean and standard error of a trace metric per group and checkpoint.

    Args:
        result_sets (list): ResultSet objects.
        grouping (str): 'set' pools every run of a result set; 'point' keeps
            sweep points apart.
        axis (str): Trace column used as checkpoint, e.g. 'k' or
            'wall_clock_s'.
        metric (str): Trace column averaged, e.g. 'loss'.

    Returns:
        list: Rows keyed by COMPARE_COLUMNS. The standard error uses the
        sample standard deviation and is 0 for a single run. Diverged runs
        are left out; groups without any remaining run are skipped.

    Raises:
        ConfigurationError: Unknown grouping, axis or metric, or a metric
            with non-numeric values.
    """
    if grouping not in GROUPINGS:
        raise ConfigurationError('Unknown grouping \'{}\'.'.format(grouping))
    if axis not in AXES:
        raise ConfigurationError('Unknown checkpoint axis \'{}\'.'
                                 .format(axis))
    if metric not in METRICS:
        raise ConfigurationError('Unknown metric \'{}\'.'.format(metric))
    groups = _groups(result_sets, grouping)
    curves = OrderedDict()
    for name, traces in groups.items():
        if not traces:
            logger.warning('Warning! Group \'%s\' has no completed run.', name)
            continue
        curves[name] = [(np.asarray(t.column(axis), dtype=np.float64),
                         _metric_values(t, metric, name))
                        for t in traces]
    if not curves:
        return []
    grid, interpolated = _common_grid(
        [curve for group in curves.values() for curve in group])
    if interpolated:
        logger.warning('Warning! Checkpoint grids on \'%s\' differ; values '
                       'are interpolated onto the coarsest grid.', axis)
    rows = []
    for name, group in curves.items():
        values = np.array([np.interp(grid, x, y) if interpolated else y
                           for x, y in group])
        mean = values.mean(axis=0)
        if len(group) > 1:
            stderr = values.std(axis=0, ddof=1) / np.sqrt(len(group))
        else:
            stderr = np.zeros_like(mean)
        for point, m, e in zip(grid, mean, stderr):
            rows.append({'group': name, 'axis': axis,
                         'checkpoint': float(point), 'mean': float(m),
                         'stderr': float(e), 'runs': len(group),
                         'interpolated': interpolated})
    return rows


def final_rows(rows):
    """Last checkpoint row of every group."""
    last = OrderedDict()
    for row in rows:
        last[row['group']] = row
    return list(last.values())


def write_comparison(rows, stream):
    writer = csv.DictWriter(stream, fieldnames=COMPARE_COLUMNS,
                            lineterminator='\n')
    writer.writeheader()
    writer.writerows(rows)


def save_comparison(rows, path):
    try:
        with open(path, 'w', newline='') as file:
            write_comparison(rows, file)
    except OSError as err:
        raise OutputError('Cannot write comparison {}: {}'.format(path, err),
                          path=str(path))
