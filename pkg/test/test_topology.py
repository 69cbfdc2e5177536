#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Unit tests for client-edge association and data partitions."""
import unittest

import numpy as np

from hierq.definitions.error import ConfigurationError, InputError
from hierq.rng import RngStream
from hierq.topology import build_association, class_skew, \
    dirichlet_partition, effective_cluster_size, iid_partition


class AssociationTest(unittest.TestCase):
    """build_association and Topology."""

    def test_contiguous_members(self):
        topology = build_association(20, 2, [18, 2])
        self.assertEqual(topology.members(0), tuple(range(18)))
        self.assertEqual(topology.edge_of(17), 0)
        self.assertEqual(topology.edge_of(18), 1)

    def test_even_split(self):
        topology = build_association(10, 3)
        self.assertEqual(topology.sizes, (4, 3, 3))
        self.assertEqual(topology.n, 10)
        self.assertEqual(topology.s, 3)

    def test_weights(self):
        topology = build_association(20, 2, [18, 2])
        self.assertEqual(topology.weights('weighted'), (0.9, 0.1))
        self.assertEqual(topology.weights('uniform'), (0.5, 0.5))
        with self.assertRaises(ConfigurationError):
            topology.weights('median')

    def test_invalid_sizes(self):
        """Sizes must be positive, sum to n and match s."""
        for n, s, sizes in ((20, 2, [10, 9]), (20, 2, [20, 0]),
                            (20, 3, [10, 10]), (2, 3, None)):
            with self.assertRaises(ConfigurationError):
                build_association(n, s, sizes)

    def test_client_out_of_range(self):
        with self.assertRaises(ConfigurationError):
            build_association(4, 2).edge_of(4)

    def test_effective_cluster_size(self):
        self.assertEqual(effective_cluster_size(build_association(20, 1)),
                         20.0)


class PartitionTest(unittest.TestCase):
    """Dirichlet and IID data partitions."""

    labels = np.arange(1000) % 2

    def test_partition_is_disjoint_cover(self):
        for seed in range(5):
            partition = dirichlet_partition(self.labels, 10, 0.1,
                                            RngStream(seed, ('partition',)))
            merged = np.sort(np.concatenate(partition.indices))
            np.testing.assert_array_equal(merged, np.arange(1000))
            self.assertTrue(all(size >= 1 for size in partition.sizes))

    def test_large_alpha_is_near_iid(self):
        """alpha = 100 keeps almost every client's class share close."""
        near = sum(class_skew(dirichlet_partition(
            self.labels, 10, 100.0, RngStream(seed)), self.labels) < 0.15
                   for seed in range(100))
        self.assertGreaterEqual(near, 95)

    def test_small_alpha_is_more_skewed(self):
        def mean_skew(alpha):
            return np.mean([class_skew(dirichlet_partition(
                self.labels, 10, alpha, RngStream(seed)), self.labels)
                            for seed in range(30)])
        self.assertGreater(mean_skew(0.1), mean_skew(100.0))

    def test_determinism(self):
        first = dirichlet_partition(self.labels, 4, 0.5, RngStream(3))
        second = dirichlet_partition(self.labels, 4, 0.5, RngStream(3))
        for a, b in zip(first.indices, second.indices):
            np.testing.assert_array_equal(a, b)

    def test_no_empty_client(self):
        """Every client ends with a sample even at tiny alpha."""
        labels = np.zeros(12)
        for seed in range(20):
            partition = dirichlet_partition(labels, 12, 0.1,
                                            RngStream(seed))
            self.assertEqual(partition.sizes, (1,) * 12)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            dirichlet_partition(self.labels, 4, 0.0, RngStream(0))
        with self.assertRaises(InputError):
            dirichlet_partition(np.zeros(3), 4, 1.0, RngStream(0))

    def test_iid_partition(self):
        partition = iid_partition(10, 3, RngStream(0))
        self.assertEqual(partition.sizes, (4, 3, 3))
        self.assertIsNone(partition.alpha)
        np.testing.assert_array_equal(
            np.sort(np.concatenate(partition.indices)), np.arange(10))


if __name__ == '__main__':
    unittest.main()
