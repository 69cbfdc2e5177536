#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Unit tests for quantizers and their certification."""
import unittest

import numpy as np

from hierq.definitions.error import ConfigurationError, \
    DimensionMismatchError, InputError
from hierq.quantizers import QuantizerSpec, certify_assumption3, quantize, \
    quantize_many, variance_factor
from hierq.rng import RngStream


def sparse_probe(dim, support, seed):
    """Probe with a few nonzero Gaussian coordinates."""
    gen = RngStream(seed, ('test-probe',)).generator()
    x = np.zeros(dim)
    x[gen.choice(dim, size=support, replace=False)] = \
        gen.standard_normal(support) + 2.0
    return x


class QuantizerSpecTest(unittest.TestCase):
    """Validation and constructors of QuantizerSpec."""

    def test_sparsification_needs_r_in_range(self):
        """r outside [1, dim] is rejected."""
        for r in (0, 5, None):
            with self.assertRaises(ConfigurationError):
                QuantizerSpec.sparsification(4, r)

    def test_rounding_needs_levels(self):
        """Stochastic rounding needs at least one level."""
        with self.assertRaises(ConfigurationError):
            QuantizerSpec.rounding(4, 0)

    def test_identity_takes_no_parameters(self):
        """Identity rejects r and levels."""
        with self.assertRaises(ConfigurationError):
            QuantizerSpec('identity', 4, r=2)
        with self.assertRaises(ConfigurationError):
            QuantizerSpec('identity', 4, levels=2)

    def test_unknown_kind(self):
        """Unknown kinds are rejected."""
        with self.assertRaises(ConfigurationError):
            QuantizerSpec('top-k', 4)

    def test_from_bits(self):
        """b bits give 2^(b-1) levels."""
        self.assertEqual(QuantizerSpec.from_bits(100, 8).levels, 128)
        self.assertEqual(QuantizerSpec.from_bits(100, 1).levels, 1)
        spec = QuantizerSpec.from_dict(
            {'kind': 'stochastic-rounding', 'bits': 4}, 10)
        self.assertEqual(spec.levels, 8)


class QuantizeTest(unittest.TestCase):
    """Single draws of Q(x)."""

    def test_identity_returns_input(self):
        """Identity returns x unchanged."""
        x = np.array([1.5, -2.0, 0.25])
        out = quantize(QuantizerSpec.identity(3), x, RngStream(0))
        np.testing.assert_array_equal(out, x)

    def test_keep_all_sparsification_is_identity(self):
        """r = dim keeps every coordinate at scale 1."""
        x = np.array([1.0, -3.0, 0.5, 2.0])
        for seed in range(5):
            out = quantize(QuantizerSpec.sparsification(4, 4), x,
                           RngStream(seed))
            np.testing.assert_array_equal(out, x)

    def test_rounding_of_zero_is_zero(self):
        """Stochastic rounding maps the zero vector to zero."""
        out = quantize(QuantizerSpec.rounding(5, 3), np.zeros(5),
                       RngStream(1))
        np.testing.assert_array_equal(out, np.zeros(5))

    def test_rounding_on_grid_is_exact(self):
        """Grid points round to themselves."""
        x = np.array([0.0, -2.0, 0.0, 0.0])
        for seed in range(10):
            out = quantize(QuantizerSpec.rounding(4, 1), x, RngStream(seed))
            np.testing.assert_array_equal(out, x)

    def test_sparsification_support(self):
        """Exactly r coordinates survive, scaled by d/r."""
        spec = QuantizerSpec.sparsification(10, 3)
        x = np.arange(1.0, 11.0)
        for seed in range(20):
            out = quantize(spec, x, RngStream(seed))
            kept = np.flatnonzero(out)
            self.assertEqual(len(kept), 3)
            np.testing.assert_allclose(out[kept], x[kept] * 10 / 3,
                                       rtol=1e-12)

    def test_rounding_levels_and_signs(self):
        """Magnitudes are ||x|| l / levels with the input's sign."""
        spec = QuantizerSpec.rounding(6, 4)
        x = np.array([0.3, -1.2, 2.5, 0.0, -0.7, 1.1])
        norm = np.linalg.norm(x)
        for seed in range(20):
            out = quantize(spec, x, RngStream(seed))
            levels = np.abs(out) / norm * 4
            np.testing.assert_allclose(levels, np.round(levels), atol=1e-9)
            self.assertTrue(np.all(levels <= 4 + 1e-9))
            nonzero = out != 0
            np.testing.assert_array_equal(np.sign(out[nonzero]),
                                          np.sign(x[nonzero]))

    def test_determinism(self):
        """Same stream, same draw; different labels, different draws."""
        spec = QuantizerSpec.sparsification(50, 5)
        x = np.ones(50)
        stream = RngStream(9, ('q1', 3, 0, 1))
        np.testing.assert_array_equal(quantize(spec, x, stream),
                                      quantize(spec, x, stream))
        other = RngStream(9, ('q1', 4, 0, 1))
        self.assertFalse(np.array_equal(quantize(spec, x, stream),
                                        quantize(spec, x, other)))

    def test_dimension_mismatch(self):
        """Wrong length is a configuration error."""
        with self.assertRaises(DimensionMismatchError):
            quantize(QuantizerSpec.identity(3), np.ones(4), RngStream(0))

    def test_non_finite_input(self):
        """NaN entries are an input error."""
        with self.assertRaises(InputError):
            quantize(QuantizerSpec.rounding(2, 1), [np.nan, 1.0],
                     RngStream(0))

    def test_batched_sparsification_keeps_r(self):
        """Batched sparsification draws keep r coordinates each."""
        spec = QuantizerSpec.sparsification(8, 2)
        draws = quantize_many(spec, np.ones(8), RngStream(0), 100)
        self.assertEqual(draws.shape, (100, 8))
        np.testing.assert_array_equal((draws != 0).sum(axis=1),
                                      np.full(100, 2))
        np.testing.assert_array_equal(np.unique(draws), [0.0, 4.0])

    def test_sparsification_mean(self):
        """Monte-Carlo mean of Q(1,1,1,1) stays within 4 sigma of x."""
        spec = QuantizerSpec.sparsification(4, 2)
        x = np.ones(4)
        draws = quantize_many(spec, x, RngStream(5), 10 ** 5)
        stderr = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        self.assertTrue(np.all(np.abs(draws.mean(axis=0) - x) <= 4 * stderr))


class VarianceFactorTest(unittest.TestCase):
    """Closed-form variance factors."""

    def test_identity(self):
        self.assertEqual(variance_factor(QuantizerSpec.identity(10)), 0.0)

    def test_sparsification(self):
        """q = d/r - 1."""
        self.assertEqual(
            variance_factor(QuantizerSpec.sparsification(10, 10)), 0.0)
        self.assertEqual(
            variance_factor(QuantizerSpec.sparsification(100, 5)), 19.0)
        self.assertAlmostEqual(
            variance_factor(QuantizerSpec.sparsification(6657, 100)), 65.57,
            places=10)

    def test_rounding(self):
        """q = min(d/s^2, sqrt(d)/s)."""
        self.assertEqual(variance_factor(QuantizerSpec.rounding(100, 1)),
                         10.0)
        self.assertEqual(variance_factor(QuantizerSpec.rounding(100, 16)),
                         100 / 256)


class CertificationTest(unittest.TestCase):
    """Monte-Carlo certification of unbiasedness and the variance bound."""

    def test_identity_passes_with_zero_ratio(self):
        spec = QuantizerSpec.identity(5)
        report = certify_assumption3(spec, [np.arange(1.0, 6.0)], 10 ** 4,
                                     RngStream(0))
        self.assertTrue(report.passed)
        self.assertEqual(report.results[0].var_ratio, 0.0)

    def test_half_sparsification_ratio(self):
        """dim=4, r=2, x=(1,0,0,0) has variance ratio 1."""
        spec = QuantizerSpec.sparsification(4, 2)
        report = certify_assumption3(spec, [[1.0, 0.0, 0.0, 0.0]], 10 ** 4,
                                     RngStream(3))
        self.assertTrue(report.passed)
        self.assertLessEqual(report.results[0].var_ratio, 1.05)

    def test_zero_probe(self):
        """Zero probes skip the ratio, check exact zeros and warn."""
        spec = QuantizerSpec.rounding(4, 2)
        with self.assertLogs('hierq.quantizers', level='WARNING') as logs:
            report = certify_assumption3(spec, [np.zeros(4)], 10 ** 4,
                                         RngStream(0))
        self.assertIn('Warning!', logs.output[0])
        result = report.results[0]
        self.assertTrue(result.zero_probe)
        self.assertTrue(result.passed)
        self.assertEqual(report.rows()[0]['var_ratio'], '')

    def test_too_few_draws(self):
        with self.assertRaises(ConfigurationError):
            certify_assumption3(QuantizerSpec.identity(2), [[1.0, 1.0]], 999,
                                RngStream(0))

    def test_reference_quantizers_pass(self):
        """Sparsification r in {5, 50, 100} and rounding levels in
        {1, 4, 16} pass at 10^5 draws on dim 100."""
        specs = [QuantizerSpec.sparsification(100, r) for r in (5, 50, 100)]
        specs += [QuantizerSpec.rounding(100, s) for s in (1, 4, 16)]
        probes = [sparse_probe(100, 5, seed) for seed in range(2)]
        for i, spec in enumerate(specs):
            report = certify_assumption3(spec, probes, 10 ** 5,
                                         RngStream(100 + i))
            for result in report.results:
                self.assertTrue(result.unbiased, (spec, result))
                self.assertLessEqual(result.var_ratio,
                                     variance_factor(spec) * 1.05 + 1e-12)

    def test_report_rows(self):
        """Report rows carry the CSV columns."""
        spec = QuantizerSpec.sparsification(4, 2)
        report = certify_assumption3(spec, [np.ones(4)], 10 ** 4,
                                     RngStream(0))
        row = report.rows()[0]
        self.assertEqual(row['kind'], 'random-sparsification')
        self.assertEqual(row['params'], 'r=2')
        self.assertEqual(row['q_bound'], 1.0)


if __name__ == '__main__':
    unittest.main()
