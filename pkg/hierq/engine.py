"""Simulation of hierarchical local SGD with quantized aggregation.

One cloud round of Hier-Local-QSGD starting from the cloud model x_k:

1. every edge l starts from u = x_k;
2. for tau2 edge rounds, every client of edge l runs tau1 SGD steps from the
   edge model and uploads Q1 of its model change, and the edge adds the mean
   of the quantized changes to its model;
3. every edge uploads Q2 of its accumulated change and the cloud sets
   x_{k+1} = x_k + sum_l w_l Q2(u^l - x_k), with w_l = m^l/n or 1/s.

Client and edge state is carried as changes relative to the round start, and
all sums run in client-id order, so that collapsing configurations reproduce
FedAvg and plain SGD bit for bit.

Every random draw comes from a stream keyed by the master seed and the event:
('grad', client, k, t2) for the tau1 gradients of a client in an edge round,
('q1', client, k, t2) for its upload and ('q2', edge, k) for an edge upload.
Results therefore do not depend on the number of worker threads.
"""
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from hierq.bound import BoundParams, compute_G
from hierq.definitions.constants import (
    ALGORITHMS, DIVERGENCE_NORM, TRACE_COLUMNS, VALUE_BITS,
    WEIGHT_SUM_TOLERANCE, WEIGHTINGS)
from hierq.definitions.error import (
    ConfigurationError, DivergenceError, OutputError)
from hierq.definitions.utils import norm_sq
from hierq.latency import quantized_payload_bits
from hierq.model import GradOracle, constants, global_loss, lipschitz, \
    sgd_step
from hierq.quantizers import quantize, variance_factor
from hierq.rng import RngStream

logger = logging.getLogger(__name__)

HIER, FEDAVG = ALGORITHMS


@dataclass(frozen=True)
class Schedule:
    """Aggregation intervals, stopping rule and step sizes.

    Attributes:
        tau1 (int): Local iterations per client-edge aggregation.
        tau2 (int): Edge rounds per cloud aggregation.
        rounds (int or None): Cloud rounds K.
        eta0 (float): Initial step size.
        eta_decay (float): Factor applied once per epoch, in (0, 1].
        iters_per_epoch (int or None): Local iterations per epoch; None
            disables decay.
        eta_milestones (tuple): (epoch, eta) pairs replacing the base step
            size from that epoch on.
        wall_clock_budget_seconds (float or None): Stop before the first
            round that would end past this time.
    """
    tau1: int
    tau2: int = 1
    rounds: int = None
    eta0: float = 0.01
    eta_decay: float = 1.0
    iters_per_epoch: int = None
    eta_milestones: tuple = ()
    wall_clock_budget_seconds: float = None

    def __post_init__(self):
        if self.tau1 < 1 or self.tau2 < 1:
            raise ConfigurationError('Intervals must be >= 1.',
                                     tau1=self.tau1, tau2=self.tau2)
        if self.rounds is None and self.wall_clock_budget_seconds is None:
            raise ConfigurationError('Schedule needs rounds or a wall-clock '
                                     'budget.')
        if self.rounds is not None and self.rounds < 1:
            raise ConfigurationError('Rounds must be >= 1.',
                                     rounds=self.rounds)
        if not self.eta0 > 0:
            raise ConfigurationError('eta0 must be positive.', eta0=self.eta0)
        if not 0 < self.eta_decay <= 1:
            raise ConfigurationError('eta_decay must be in (0, 1].',
                                     eta_decay=self.eta_decay)
        if self.iters_per_epoch is not None and self.iters_per_epoch < 1:
            raise ConfigurationError('iters_per_epoch must be >= 1.')
        milestones = tuple((int(e), float(v)) for e, v in self.eta_milestones)
        if any(v <= 0 for _, v in milestones) or \
                list(milestones) != sorted(milestones):
            raise ConfigurationError('Milestones must be sorted (epoch, eta) '
                                     'pairs with eta > 0.')
        object.__setattr__(self, 'eta_milestones', milestones)

    def epoch(self, t_total):
        if self.iters_per_epoch is None:
            return 0
        return t_total // self.iters_per_epoch

    def eta_at(self, t_total):
        """Step size in force after t_total local iterations.

        >>> Schedule(tau1=1, rounds=1, eta0=0.1, eta_decay=0.5,
        ...          iters_per_epoch=10).eta_at(25)
        0.025
        """
        epoch = self.epoch(t_total)
        base = self.eta0
        for start, value in self.eta_milestones:
            if epoch >= start:
                base = value
        return base * self.eta_decay ** epoch


@dataclass(frozen=True)
class EngineConfig:
    """Everything a simulation run needs.

    Attributes:
        topology (Topology): Client-edge association.
        model (LossModel): Client losses.
        schedule (Schedule): Intervals and step sizes.
        q1 (QuantizerSpec): Client-to-edge quantizer.
        q2 (QuantizerSpec): Edge-to-cloud quantizer.
        weighting (str): 'weighted' (m^l/n) or 'uniform' (1/s).
        seed (int): Master seed.
        x0 (numpy.ndarray or None): Initial model, default the origin.
        latency (LatencyModel or None): Wall-clock model; None counts zero.
        workers (int): Threads simulating clients.
        diagnostics (bool): Record the cloud average skipping Q2.
        algorithm (str): 'hier-local-qsgd' or 'fedavg'.
    """
    topology: object
    model: object
    schedule: Schedule
    q1: object
    q2: object
    weighting: str = 'weighted'
    seed: int = 0
    x0: object = field(default=None, compare=False)
    latency: object = None
    workers: int = 1
    diagnostics: bool = False
    algorithm: str = HIER

    def __post_init__(self):
        dim = self.model.dim
        for name in ('q1', 'q2'):
            if getattr(self, name).dim != dim:
                msg = 'Quantizer {} has dim {}, model has {}.'.format(
                    name, getattr(self, name).dim, dim)
                raise ConfigurationError(msg)
        if self.topology.n != self.model.n_clients:
            msg = 'Topology has {} clients, model has {}.'.format(
                self.topology.n, self.model.n_clients)
            raise ConfigurationError(msg)
        if self.weighting not in WEIGHTINGS:
            raise ConfigurationError('Unknown weighting \'{}\'.'
                                     .format(self.weighting))
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError('Unknown algorithm \'{}\'.'
                                     .format(self.algorithm))
        if self.workers < 1:
            raise ConfigurationError('Need at least one worker.')
        if self.schedule.wall_clock_budget_seconds is not None \
                and self.latency is None:
            raise ConfigurationError('A wall-clock budget needs a latency '
                                     'model.')
        if self.schedule.rounds is None and self._shortest_round() <= 0:
            raise ConfigurationError('A wall-clock budget without a round '
                                     'limit needs rounds that take time; all '
                                     'latencies are zero.')
        if self.x0 is not None:
            object.__setattr__(self, 'x0', self.model.check(self.x0))

    def _shortest_round(self):
        """Seconds of a round with tau1 = tau2 = 1; no schedule is shorter."""
        if self.latency is None:
            return 0.0
        if self.algorithm == FEDAVG:
            return self.latency.fedavg_round_time(1)
        return self.latency.round_time(1, 1)

    def initial_point(self):
        if self.x0 is None:
            return np.zeros(self.model.dim)
        return self.x0.copy()

    def describe(self):
        """JSON-friendly description, sufficient to rebuild the run."""
        return {
            'algorithm': self.algorithm,
            'topology': self.topology.to_dict(),
            'model': self.model.describe(),
            'schedule': asdict(self.schedule),
            'q1': self.q1.to_dict(),
            'q2': self.q2.to_dict(),
            'weighting': self.weighting,
            'seed': self.seed,
            'x0': None if self.x0 is None else self.x0.tolist(),
            'latency': None if self.latency is None
            else self.latency.to_dict(),
            'diagnostics': self.diagnostics
        }


class RunTrace:
    """Per-cloud-round records of a run.

    Row k describes the cloud model x_k and the intervals and step size of
    the round that produced it. Row 0 is the initial model.

    Attributes:
        rows (list): Dicts keyed by TRACE_COLUMNS.
        models (list): Cloud models x_k.
        virtual_models (list): Cloud averages skipping Q2, when diagnostics
            are on.
        metadata (dict): Config, seed, G and constants.
    """

    def __init__(self, metadata=None):
        self.rows = []
        self.models = []
        self.virtual_models = []
        self.metadata = dict(metadata or {})

    def record(self, x, **row):
        if self.rows:
            last = self.rows[-1]
            if row['k'] <= last['k'] or \
                    row['wall_clock_s'] < last['wall_clock_s']:
                raise ValueError('Trace rows must advance.')
        self.rows.append({c: row.get(c, '') for c in TRACE_COLUMNS})
        self.models.append(np.array(x))

    def __len__(self):
        return len(self.rows)

    @property
    def final(self):
        return self.rows[-1]

    def column(self, name):
        return [row[name] for row in self.rows]

    def summary(self):
        """Final-round figures for sweep summaries."""
        final = self.final
        return {
            'rounds': final['k'],
            'final_loss': final['loss'],
            'final_grad_norm_sq': final['grad_norm_sq'],
            'wall_clock_s': final['wall_clock_s'],
            'uplink_bits': final['uplink_bits']
        }

    def to_csv(self, stream):
        writer = csv.DictWriter(stream, fieldnames=TRACE_COLUMNS,
                                lineterminator='\n')
        writer.writeheader()
        writer.writerows(self.rows)

    def write_csv(self, path):
        try:
            with open(path, 'w', newline='') as file:
                self.to_csv(file)
        except OSError as err:
            raise OutputError('Cannot write trace {}: {}'.format(path, err),
                              path=str(path))

    def write_metadata(self, path):
        try:
            with open(path, 'w') as file:
                json.dump(self.metadata, file, indent=2, sort_keys=True)
                file.write('\n')
        except OSError as err:
            raise OutputError('Cannot write metadata {}: {}'
                              .format(path, err), path=str(path))


def _ordered_sum(vectors, dim):
    """Left-to-right sum, independent of how the vectors were computed."""
    total = np.zeros(dim)
    for vector in vectors:
        total = total + vector
    return total


def _diverged(x):
    return not np.all(np.isfinite(x)) or norm_sq(x) > DIVERGENCE_NORM ** 2


def _check_weights(weights, weighting):
    if weighting == 'weighted':
        if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ConfigurationError('Edge weights sum to {}, expected 1.'
                                     .format(sum(weights)),
                                     weights=list(weights))
    elif any(abs(w - 1.0 / len(weights)) > WEIGHT_SUM_TOLERANCE
             for w in weights):
        raise ConfigurationError('Uniform weights must all equal 1/s.',
                                 weights=list(weights))


def edge_aggregate(u, client_deltas, q1_spec, streams):
    """Edge model after one client-edge aggregation.

    Args:
        u (numpy.ndarray): Current edge model (or its change).
        client_deltas (list): Model changes of the edge's clients, in client
            order.
        q1_spec (QuantizerSpec): Upload quantizer.
        streams (list): One RngStream per client.

    Returns:
        numpy.ndarray: u + (1/m) sum_i Q1(delta_i).
    """
    if not client_deltas:
        raise ConfigurationError('An edge needs at least one client.')
    quantized = [quantize(q1_spec, delta, stream)
                 for delta, stream in zip(client_deltas, streams)]
    return u + _ordered_sum(quantized, len(u)) / len(quantized)


def cloud_aggregate(x_k, edge_deltas, weights, q2_spec, streams,
                    weighting='weighted'):
    """Cloud model after one edge-cloud aggregation.

    Args:
        x_k (numpy.ndarray): Current cloud model.
        edge_deltas (list): Accumulated change of every edge.
        weights (tuple): Per-edge coefficients.
        q2_spec (QuantizerSpec): Upload quantizer.
        streams (list): One RngStream per edge.
        weighting (str): 'weighted' requires weights summing to 1, 'uniform'
            requires every weight to be 1/s.

    Returns:
        numpy.ndarray: x_k + sum_l w_l Q2(delta_l).

    Raises:
        ConfigurationError: Weights violate the weighting's rule.
    """
    _check_weights(weights, weighting)
    terms = [w * quantize(q2_spec, delta, stream)
             for w, delta, stream in zip(weights, edge_deltas, streams)]
    return x_k + _ordered_sum(terms, len(x_k))


def virtual_unquantized_state(x_k, edge_deltas, weights):
    """Cloud model the round would have produced without Q2."""
    terms = [w * delta for w, delta in zip(weights, edge_deltas)]
    return x_k + _ordered_sum(terms, len(x_k))


def _local_run(model, client, start, tau1, eta, stream, report_loss):
    """tau1 SGD steps from start; returns (change, local loss or None)."""
    oracle = GradOracle(model, client, stream)
    delta = np.zeros(model.dim)
    with np.errstate(over='ignore', invalid='ignore'):
        for _ in range(tau1):
            delta = sgd_step(delta, oracle.sample(start + delta), eta)
        loss = model.client_loss(start + delta, client) if report_loss \
            else None
    return delta, loss


@dataclass
class RoundResult:
    x_next: np.ndarray
    x_bar: np.ndarray
    train_loss: float


class _Clock:
    """Cumulative wall-clock, exact multiples of the round time per segment
    of constant intervals."""

    def __init__(self):
        self.base = 0.0
        self.key = None
        self.count = 0
        self.step = 0.0

    @property
    def elapsed(self):
        return self.base + self.count * self.step

    def peek(self, key, step):
        if key != self.key:
            return self.elapsed + step
        return self.base + (self.count + 1) * self.step

    def advance(self, key, step):
        if key != self.key:
            self.base = self.elapsed
            self.key, self.count, self.step = key, 0, step
        self.count += 1


class Engine:
    """Runs one EngineConfig; `run` returns the RunTrace."""

    def __init__(self, config):
        self.config = config
        self.model = config.model
        self.fedavg = config.algorithm == FEDAVG
        self.root = RngStream(config.seed)
        self.weights = config.topology.weights(config.weighting)
        full_bits = self.model.dim * VALUE_BITS
        self.q1_bits = quantized_payload_bits(config.q1, full_bits)
        self.q2_bits = quantized_payload_bits(config.q2, full_bits)

    def round_time(self, tau1, tau2):
        latency = self.config.latency
        if latency is None:
            return 0.0
        if self.fedavg:
            return latency.fedavg_round_time(tau1)
        return latency.round_time(tau1, tau2)

    def round_bits(self, tau2):
        n = self.model.n_clients
        if self.fedavg:
            return n * self.q1_bits
        return n * tau2 * self.q1_bits + self.config.topology.s * self.q2_bits

    def mean_client_loss(self, x):
        return float(np.mean([self.model.client_loss(x, i)
                              for i in range(self.model.n_clients)]))

    def metadata(self):
        """Run description with the G condition at the initial schedule."""
        cfg = self.config
        s = 1 if self.fedavg else cfg.topology.s
        tau2 = 1 if self.fedavg else cfg.schedule.tau2
        params = BoundParams(
            L=lipschitz(self.model), eta=cfg.schedule.eta0, sigma2=0.0,
            n=self.model.n_clients, s=s, tau1=cfg.schedule.tau1, tau2=tau2,
            q1=variance_factor(cfg.q1),
            q2=0.0 if self.fedavg else variance_factor(cfg.q2))
        G = compute_G(params)
        if G < 0:
            logger.warning('Warning! G = %.4g < 0: the convergence bound does '
                           'not apply to this schedule.', G)
        if not self.model.iid:
            logger.warning('Warning! Clients are not IID: the convergence '
                           'bound assumptions do not hold.')
        consts = constants(self.model, x0=cfg.initial_point(), seed=cfg.seed)
        return {'config': self.config.describe(), 'seed': cfg.seed, 'G': G,
                'constants': consts.to_dict()}

    @contextmanager
    def _pool(self):
        if self.config.workers == 1:
            yield None
            return
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            yield pool

    @staticmethod
    def _map(pool, func, items):
        if pool is None:
            return [func(item) for item in items]
        return list(pool.map(func, items))

    def _client_round(self, pool, starts, k, t2, tau1, eta, report_loss):
        """Local runs of all clients; starts[i] is client i's start."""
        def task(client):
            stream = self.root.child('grad', client, k, t2)
            return _local_run(self.model, client, starts[client], tau1, eta,
                              stream, report_loss)
        results = self._map(pool, task, range(self.model.n_clients))
        for client, (delta, _) in enumerate(results):
            if _diverged(delta):
                raise DivergenceError('Client {} diverged in round {}.'
                                      .format(client, k + 1), client=client)
        return results

    def run_round(self, x, k, tau1, tau2, eta, pool=None):
        """One cloud round from x; returns a RoundResult."""
        if self.fedavg:
            return self._fedavg_round(x, k, tau1, eta, pool)
        topology, dim = self.config.topology, self.model.dim
        updates = [np.zeros(dim) for _ in range(topology.s)]
        results = None
        for t2 in range(tau2):
            starts = {}
            for edge in range(topology.s):
                start = x + updates[edge]
                for client in topology.members(edge):
                    starts[client] = start
            results = self._client_round(pool, starts, k, t2, tau1, eta,
                                         t2 == tau2 - 1)
            for edge in range(topology.s):
                members = topology.members(edge)
                updates[edge] = edge_aggregate(
                    updates[edge], [results[i][0] for i in members],
                    self.config.q1,
                    [self.root.child('q1', i, k, t2) for i in members])
        streams = [self.root.child('q2', edge, k)
                   for edge in range(topology.s)]
        x_next = cloud_aggregate(x, updates, self.weights, self.config.q2,
                                 streams, self.config.weighting)
        x_bar = virtual_unquantized_state(x, updates, self.weights) \
            if self.config.diagnostics else None
        train_loss = float(np.mean([loss for _, loss in results]))
        return RoundResult(x_next, x_bar, train_loss)

    def _fedavg_round(self, x, k, tau, eta, pool):
        n = self.model.n_clients
        results = self._client_round(pool, [x] * n, k, 0, tau, eta, True)
        quantized = [quantize(self.config.q1, delta,
                              self.root.child('q1', i, k, 0))
                     for i, (delta, _) in enumerate(results)]
        x_next = x + _ordered_sum(quantized, self.model.dim) / n
        train_loss = float(np.mean([loss for _, loss in results]))
        return RoundResult(x_next, x_next if self.config.diagnostics
                           else None, train_loss)

    def _row(self, x, **row):
        row['loss'] = global_loss(self.model, x)
        row['grad_norm_sq'] = norm_sq(self.model.global_gradient(x))
        return row

    def run(self, controller=None):
        """Simulate until the round limit or the wall-clock budget.

        Args:
            controller (object or None): Chooses tau1 before every round via
                `next_tau1(elapsed_seconds, train_loss, eta)`.

        Returns:
            RunTrace

        Raises:
            DivergenceError: Non-finite or exploding model; carries the trace
                up to the last good round.
        """
        cfg, schedule = self.config, self.config.schedule
        trace = RunTrace(self.metadata())
        x = cfg.initial_point()
        tau1 = schedule.tau1
        tau2 = 1 if self.fedavg else schedule.tau2
        budget = schedule.wall_clock_budget_seconds
        row = self._row(
            x, k=0, t_total=0, wall_clock_s=0.0, tau1=tau1, tau2=tau2,
            eta=schedule.eta_at(0), uplink_bits=0,
            train_loss=self.mean_client_loss(x))
        if cfg.diagnostics:
            row['q2_error_sq'] = 0.0
        trace.record(x, **row)
        clock = _Clock()
        k = t_total = bits = 0
        with self._pool() as pool:
            while schedule.rounds is None or k < schedule.rounds:
                eta = schedule.eta_at(t_total)
                if controller is not None:
                    tau1 = controller.next_tau1(
                        clock.elapsed, trace.final['train_loss'], eta)
                step = self.round_time(tau1, tau2)
                if budget is not None and \
                        clock.peek((tau1, tau2), step) > budget:
                    break
                try:
                    result = self.run_round(x, k, tau1, tau2, eta, pool)
                except DivergenceError as err:
                    err.round, err.trace = k + 1, trace
                    err.details['round'] = k + 1
                    raise
                if _diverged(result.x_next):
                    raise DivergenceError(
                        'Cloud model diverged in round {}.'.format(k + 1),
                        round=k + 1, trace=trace)
                k += 1
                t_total += tau1 * tau2
                bits += self.round_bits(tau2)
                clock.advance((tau1, tau2), step)
                x = result.x_next
                row = self._row(
                    x, k=k, t_total=t_total, wall_clock_s=clock.elapsed,
                    tau1=tau1, tau2=tau2, eta=eta, uplink_bits=bits,
                    train_loss=result.train_loss)
                if result.x_bar is not None:
                    row['q2_error_sq'] = norm_sq(x - result.x_bar)
                    trace.virtual_models.append(result.x_bar)
                trace.record(x, **row)
                logger.debug('round %d: loss=%.6g tau1=%d tau2=%d eta=%.4g',
                             k, row['loss'], tau1, tau2, eta)
        return trace


def run_hier_local_qsgd(config, controller=None):
    """Run Hier-Local-QSGD; see `Engine.run`."""
    if config.algorithm != HIER:
        raise ConfigurationError('Config is for {}.'.format(config.algorithm))
    return Engine(config).run(controller)


def run_fedavg(config, controller=None):
    """Run FedAvg with interval schedule.tau1 and a single server.

    Clients average their Q1-quantized changes with weight 1/n; the topology
    and Q2 are ignored. The round time is tau1 D_comp + D_ec.
    """
    if config.algorithm != FEDAVG:
        config = replace(config, algorithm=FEDAVG)
    return Engine(config).run(controller)


def run_plain_sgd(model, x0, eta, iterations, seed, client=0):
    """Single-client SGD reading the same gradient streams as the engine.

    Iteration t draws from ('grad', client, t, 0), the stream of cloud round
    t of a one-client engine with tau1 = tau2 = 1.

    Args:
        model (LossModel): Loss model.
        x0 (array-like or None): Initial model.
        eta (float): Constant step size.
        iterations (int): Number of SGD steps.
        seed (int): Master seed.
        client (int): Client whose loss is minimized.

    Returns:
        RunTrace: One row per iteration.
    """
    root = RngStream(seed)
    x = np.zeros(model.dim) if x0 is None else model.check(x0)
    trace = RunTrace({'algorithm': 'plain-sgd', 'seed': seed, 'eta': eta,
                      'client': client, 'model': model.describe()})

    def row(t, x):
        return {'k': t, 't_total': t, 'wall_clock_s': 0.0,
                'loss': global_loss(model, x),
                'grad_norm_sq': norm_sq(model.global_gradient(x)),
                'tau1': 1, 'tau2': 1, 'eta': eta, 'uplink_bits': 0,
                'train_loss': model.client_loss(x, client)}

    trace.record(x, **row(0, x))
    for t in range(iterations):
        oracle = GradOracle(model, client, root.child('grad', client, t, 0))
        with np.errstate(over='ignore', invalid='ignore'):
            x = sgd_step(x, oracle.sample(x), eta)
        if _diverged(x):
            raise DivergenceError('SGD diverged at iteration {}.'
                                  .format(t + 1), round=t + 1, trace=trace)
        trace.record(x, **row(t + 1, x))
    return trace
