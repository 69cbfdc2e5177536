#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Unit tests for the Hier-Local-QSGD simulation engine."""
import io
import json
import unittest
from dataclasses import replace

import numpy as np

from hierq import enumerate_combos, run_single
from hierq.bound import BoundParams, theorem1_rhs
from hierq.config import apply_override, load_config, validate_config
from hierq.definitions.abstractions import derive_seed
from hierq.definitions.error import ConfigurationError, DivergenceError
from hierq.engine import EngineConfig, Schedule, cloud_aggregate, \
    edge_aggregate, run_fedavg, run_hier_local_qsgd, run_plain_sgd, \
    virtual_unquantized_state
from hierq.latency import LatencyModel
from hierq.model import LossModel, global_loss
from hierq.quantizers import QuantizerSpec
from hierq.rng import RngStream
from hierq.topology import build_association
from test.config import CONFIGS_DIR


def make_config(n=4, s=2, sizes=None, dim=3, centers=None, noise=0.0,
                tau1=2, tau2=2, rounds=10, eta=0.1, q1=None, q2=None,
                **kwargs):
    """Quadratic clients with A = I; identity quantizers by default."""
    if centers is None:
        centers = np.zeros((n, dim))
    model = LossModel.quadratic(np.ones(dim), centers, noise_sigma=noise)
    schedule = Schedule(tau1=tau1, tau2=tau2, rounds=rounds, eta0=eta,
                        wall_clock_budget_seconds=kwargs.pop('budget', None))
    return EngineConfig(
        topology=build_association(n, s, sizes), model=model,
        schedule=schedule, q1=q1 or QuantizerSpec.identity(dim),
        q2=q2 or QuantizerSpec.identity(dim),
        x0=kwargs.pop('x0', np.ones(dim)), **kwargs)


def spread_centers(n, dim, seed=0):
    return RngStream(seed, ('centers',)).generator().standard_normal((n, dim))


def pooled_gap(a, b):
    """Difference of group means in pooled standard errors."""
    stderr = np.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b))
    return (np.mean(b) - np.mean(a)) / stderr


class ScheduleTest(unittest.TestCase):
    """Step sizes and stopping rules."""

    def test_needs_a_stopping_rule(self):
        with self.assertRaises(ConfigurationError):
            Schedule(tau1=1)

    def test_invalid_values(self):
        for kwargs in ({'tau1': 0}, {'eta0': 0.0}, {'eta_decay': 1.5},
                       {'rounds': 0},
                       {'eta_milestones': ((2, 0.1), (1, 0.2))}):
            data = {'tau1': 1, 'rounds': 1}
            data.update(kwargs)
            with self.assertRaises(ConfigurationError):
                Schedule(**data)

    def test_milestones(self):
        schedule = Schedule(tau1=1, rounds=1, eta0=0.1, iters_per_epoch=10,
                            eta_milestones=((2, 0.05),))
        self.assertEqual(schedule.eta_at(15), 0.1)
        self.assertEqual(schedule.eta_at(25), 0.05)

    def test_constant_without_epochs(self):
        schedule = Schedule(tau1=1, rounds=1, eta0=0.1, eta_decay=0.5)
        self.assertEqual(schedule.eta_at(10 ** 6), 0.1)


class AggregationTest(unittest.TestCase):
    """Edge and cloud aggregation steps."""

    def test_edge_mean_of_changes(self):
        identity = QuantizerSpec.identity(2)
        u = edge_aggregate(np.array([1.0, 1.0]),
                           [np.array([2.0, 0.0]), np.array([0.0, 4.0])],
                           identity, [RngStream(0), RngStream(1)])
        np.testing.assert_array_equal(u, [2.0, 3.0])

    def test_edge_needs_clients(self):
        with self.assertRaises(ConfigurationError):
            edge_aggregate(np.zeros(2), [], QuantizerSpec.identity(2), [])

    def test_cloud_weights(self):
        identity = QuantizerSpec.identity(1)
        deltas = [np.array([1.0]), np.array([3.0])]
        streams = [RngStream(0), RngStream(1)]
        x = cloud_aggregate(np.zeros(1), deltas, (0.75, 0.25), identity,
                            streams)
        np.testing.assert_array_equal(x, [1.5])
        np.testing.assert_array_equal(
            virtual_unquantized_state(np.zeros(1), deltas, (0.75, 0.25)),
            [1.5])

    def test_cloud_rejects_bad_weights(self):
        identity = QuantizerSpec.identity(1)
        deltas = [np.array([1.0]), np.array([3.0])]
        streams = [RngStream(0), RngStream(1)]
        with self.assertRaises(ConfigurationError):
            cloud_aggregate(np.zeros(1), deltas, (0.5, 0.6), identity,
                            streams)
        with self.assertRaises(ConfigurationError):
            cloud_aggregate(np.zeros(1), deltas, (0.9, 0.1), identity,
                            streams, weighting='uniform')


class EngineConfigTest(unittest.TestCase):
    """Consistency checks of EngineConfig."""

    def test_quantizer_dimension(self):
        with self.assertRaises(ConfigurationError):
            make_config(q1=QuantizerSpec.identity(4))

    def test_topology_size(self):
        with self.assertRaises(ConfigurationError):
            make_config(n=4, centers=np.zeros((3, 3)))

    def test_budget_needs_latency(self):
        with self.assertRaises(ConfigurationError):
            make_config(rounds=None, budget=100.0)

    def test_budget_needs_rounds_that_take_time(self):
        zero = LatencyModel(0.0, 0.0, 0.0)
        with self.assertRaises(ConfigurationError):
            make_config(rounds=None, budget=10.0, latency=zero)
        with self.assertRaises(ConfigurationError):
            make_config(rounds=None, budget=10.0, algorithm='fedavg',
                        latency=LatencyModel(0.0, 5.0, 0.0))
        make_config(rounds=None, budget=10.0,
                    latency=LatencyModel(0.0, 5.0, 0.0))
        make_config(rounds=3, budget=10.0, latency=zero)

    def test_describe_is_json(self):
        config = make_config(latency=LatencyModel(1.0, 2.0, 3.0))
        data = json.loads(json.dumps(config.describe()))
        self.assertEqual(data['topology']['sizes'], [2, 2])
        self.assertEqual(data['latency']['d_ec_seconds'], 3.0)


class ReductionTest(unittest.TestCase):
    """Collapsed configurations reproduce simpler algorithms exactly."""

    def test_single_client_is_plain_sgd(self):
        for seed in (4, 5, 6):
            config = make_config(n=1, s=1, tau1=1, tau2=1, rounds=200,
                                 noise=1.0, eta=0.01, seed=seed)
            trace = run_hier_local_qsgd(config)
            sgd = run_plain_sgd(config.model, np.ones(3), 0.01, 200,
                                seed=seed)
            self.assertEqual(len(trace.models), 201)
            self.assertEqual(len(sgd.models), 201)
            for a, b in zip(trace.models, sgd.models):
                np.testing.assert_array_equal(a, b)

    def test_one_edge_round_is_fedavg(self):
        """tau2 = 1, one edge and identity Q2 give FedAvg."""
        for seed in (2, 3, 4):
            config = make_config(n=4, s=1, tau1=4, tau2=1, rounds=50,
                                 noise=1.0, eta=0.02, seed=seed,
                                 centers=spread_centers(4, 3),
                                 q1=QuantizerSpec.sparsification(3, 2))
            hier = run_hier_local_qsgd(config)
            fedavg = run_fedavg(config)
            self.assertEqual(hier.final['t_total'], 200)
            for a, b in zip(hier.models, fedavg.models):
                np.testing.assert_array_equal(a, b)

    def test_fedavg_config_is_not_hier(self):
        config = make_config(algorithm='fedavg')
        with self.assertRaises(ConfigurationError):
            run_hier_local_qsgd(config)


class AssociationTest(unittest.TestCase):
    """Effect of the client-edge association."""

    def test_weighted_association_invariance(self):
        """With A = I, weighted averaging and identity quantizers the cloud
        model does not depend on the association."""
        centers = spread_centers(20, 5)
        runs = [run_hier_local_qsgd(make_config(
            n=20, s=2, sizes=sizes, dim=5, centers=centers, noise=1.0,
            tau1=3, tau2=4, rounds=10, eta=0.05, seed=8))
            for sizes in ([18, 2], [15, 5], [10, 10])]
        for other in runs[1:]:
            for xa, xb in zip(runs[0].models, other.models):
                self.assertLessEqual(np.linalg.norm(xa - xb),
                                     1e-10 * np.linalg.norm(xa))

    def test_uniform_weighting_depends_on_association(self):
        centers = spread_centers(20, 5)
        finals = [run_hier_local_qsgd(make_config(
            n=20, s=2, sizes=sizes, dim=5, centers=centers, tau1=3, tau2=4,
            rounds=10, eta=0.05, weighting='uniform')).models[-1]
            for sizes in ([18, 2], [10, 10])]
        self.assertGreater(np.linalg.norm(finals[0] - finals[1]), 1e-6)


class IntervalSplitTest(unittest.TestCase):
    """Splitting a fixed tau1 tau2 between the two intervals."""

    def test_split_does_not_change_exact_runs(self):
        """Shared curvature, no noise and identity quantizers: every split of
        tau1 tau2 = 60 moves the cloud model identically."""
        centers = spread_centers(20, 5, seed=3)
        runs = [run_hier_local_qsgd(make_config(
            n=20, s=4, dim=5, centers=centers, tau1=tau1, tau2=tau2,
            rounds=5, eta=0.01))
            for tau1, tau2 in ((2, 30), (6, 10), (60, 1))]
        for other in runs[1:]:
            self.assertEqual([r['t_total'] for r in other.rows],
                             [r['t_total'] for r in runs[0].rows])
            for xa, xb in zip(runs[0].models, other.models):
                self.assertLessEqual(np.linalg.norm(xa - xb),
                                     1e-10 * np.linalg.norm(xa))

    def test_flip_sweep_orderings(self):
        """Final loss of the shipped flip sweep, 20 repetitions per point.

        Identity uploads leave tau1 = 2 and tau1 = 60 within 2 pooled
        standard errors. Sparsified uploads (q1 = 19) are cheaper at
        tau1 = 2 by at least 2 pooled standard errors.
        """
        config = load_config(CONFIGS_DIR + 'flip.json')
        base = config.model_dump()
        base['sweep'] = {}
        finals = {}
        for p, point in enumerate(enumerate_combos(config.sweep)):
            tau1 = point['schedule']['tau1']
            if tau1 not in (2, 60):
                continue
            data = base
            for path, value in point.items():
                data = apply_override(data, path, value)
            point_config = validate_config(data)
            finals[point['q1']['kind'], tau1] = np.array([
                run_single(point_config,
                           derive_seed(config.seed, p, r)).final['loss']
                for r in range(config.repetitions)])
        self.assertLess(abs(pooled_gap(finals['identity', 2],
                                       finals['identity', 60])), 2.0)
        self.assertGreaterEqual(
            pooled_gap(finals['random-sparsification', 2],
                       finals['random-sparsification', 60]), 2.0)


class RunTest(unittest.TestCase):
    """Traces, accounting and failure modes of a run."""

    def test_converges_without_noise(self):
        config = make_config(n=4, s=2, centers=spread_centers(4, 3),
                             tau1=2, tau2=2, rounds=100, eta=0.1)
        trace = run_hier_local_qsgd(config)
        self.assertLess(trace.final['grad_norm_sq'], 1e-4)
        self.assertEqual(trace.final['k'], 100)
        self.assertEqual(trace.final['t_total'], 400)

    def test_trace_accounting(self):
        """Bits and wall-clock grow by a fixed amount per round."""
        latency = LatencyModel(2.0, 33.0, 330.0)
        config = make_config(n=4, s=2, tau1=2, tau2=2, rounds=5,
                             latency=latency)
        trace = run_hier_local_qsgd(config)
        self.assertEqual(len(trace), 6)
        per_round_bits = 4 * 2 * 96 + 2 * 96
        for row in trace.rows:
            self.assertEqual(row['uplink_bits'], row['k'] * per_round_bits)
            self.assertEqual(row['wall_clock_s'],
                             row['k'] * latency.round_time(2, 2))
        self.assertEqual(trace.rows[0]['loss'],
                         global_loss(config.model, np.ones(3)))

    def test_wall_clock_budget(self):
        """4 s rounds under a 10 s budget stop after two rounds."""
        config = make_config(rounds=None, budget=10.0,
                             latency=LatencyModel(1.0, 0.0, 0.0))
        trace = run_hier_local_qsgd(config)
        self.assertEqual(trace.final['k'], 2)
        self.assertEqual(trace.final['wall_clock_s'], 8.0)

    def test_workers_do_not_change_results(self):
        gen = RngStream(21, ('configs',)).generator()
        for index in range(5):
            s = int(gen.integers(1, 4))
            n = s * int(gen.integers(1, 5))
            dim = int(gen.integers(2, 8))
            r = int(gen.integers(1, dim + 1))
            tau1 = int(gen.integers(1, 4))
            outputs = []
            for workers in (1, 8):
                config = make_config(
                    n=n, s=s, dim=dim, noise=1.0, tau1=tau1, tau2=2,
                    centers=spread_centers(n, dim, seed=index), rounds=4,
                    workers=workers, seed=index,
                    q1=QuantizerSpec.sparsification(dim, r),
                    q2=QuantizerSpec.rounding(dim, 4))
                stream = io.StringIO()
                run_hier_local_qsgd(config).to_csv(stream)
                outputs.append(stream.getvalue())
            self.assertEqual(outputs[0], outputs[1])

    def test_seed_changes_results(self):
        finals = [run_hier_local_qsgd(make_config(noise=1.0, seed=seed))
                  .models[-1] for seed in (0, 1)]
        self.assertFalse(np.array_equal(finals[0], finals[1]))

    def test_diagnostics(self):
        """Identity Q2 has zero aggregation error; rounding does not."""
        exact = run_hier_local_qsgd(make_config(diagnostics=True, noise=1.0))
        self.assertTrue(all(row['q2_error_sq'] == 0.0 for row in exact.rows))
        rounded = run_hier_local_qsgd(make_config(
            diagnostics=True, noise=1.0, q2=QuantizerSpec.rounding(3, 1)))
        self.assertGreater(max(row['q2_error_sq']
                               for row in rounded.rows[1:]), 0.0)
        self.assertEqual(len(rounded.virtual_models), 10)

    def test_negative_G_warns(self):
        config = make_config(n=2, s=1, tau1=10, tau2=1, rounds=2, eta=0.5)
        with self.assertLogs('hierq.engine', level='WARNING') as logs:
            trace = run_hier_local_qsgd(config)
        self.assertIn('G =', logs.output[0])
        self.assertLess(trace.metadata['G'], 0)

    def test_divergence(self):
        config = make_config(tau1=1, tau2=1, rounds=100, eta=3.0)
        with self.assertRaises(DivergenceError) as ctx:
            run_hier_local_qsgd(config)
        err = ctx.exception
        self.assertGreater(err.round, 1)
        self.assertEqual(len(err.trace), err.round)
        self.assertTrue(np.isfinite(err.trace.final['loss']))


class BoundCheckTest(unittest.TestCase):
    """The fixed-interval bound holds on a noisy quadratic."""

    def test_gradient_norm_below_bound_per_run(self):
        """At least 95% of 40 seeded runs meet the bound individually."""
        K = 50
        means = []
        for seed in range(40):
            config = make_config(n=4, s=2, dim=10, noise=1.0, tau1=2,
                                 tau2=2, rounds=K, eta=0.01, seed=seed,
                                 x0=np.ones(10))
            trace = run_hier_local_qsgd(config)
            means.append(np.mean(trace.column('grad_norm_sq')[:K]))
        p = BoundParams(L=1.0, eta=0.01, sigma2=1.0, n=4, s=2, tau1=2,
                        tau2=2, K=K, f0=5.0)
        bound = theorem1_rhs(p)
        self.assertTrue(bound.valid)
        within = sum(mean <= bound.value for mean in means)
        self.assertGreaterEqual(within, 38)


class FedAvgTest(unittest.TestCase):
    """FedAvg baseline."""

    def test_round_time_and_bits(self):
        latency = LatencyModel(2.0, 33.0, 330.0)
        config = make_config(n=4, s=2, tau1=5, rounds=3, latency=latency)
        trace = run_fedavg(config)
        self.assertEqual(trace.final['wall_clock_s'], 3 * (5 * 2.0 + 330.0))
        self.assertEqual(trace.final['uplink_bits'], 3 * 4 * 96)
        self.assertEqual(trace.final['tau2'], 1)

    def test_plain_sgd_divergence(self):
        model = LossModel.quadratic(np.ones(2), [[0.0, 0.0]])
        with self.assertRaises(DivergenceError):
            run_plain_sgd(model, np.ones(2), 3.0, 100, seed=0)

    def test_replace_keeps_x0(self):
        config = replace(make_config(), algorithm='fedavg')
        np.testing.assert_array_equal(config.initial_point(), np.ones(3))


if __name__ == '__main__':
    unittest.main()
