"""Client-edge association and per-client data partitions."""
import logging
from dataclasses import dataclass

import numpy as np

from hierq.definitions.constants import WEIGHTINGS
from hierq.definitions.error import ConfigurationError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    """n clients split into s disjoint edge groups.

    Clients are numbered 0..n-1 and assigned contiguously: edge l holds the
    m^l clients following those of edges 0..l-1.

    Attributes:
        sizes (tuple): m^l per edge.
    """
    sizes: tuple

    @property
    def n(self):
        return sum(self.sizes)

    @property
    def s(self):
        return len(self.sizes)

    def members(self, edge):
        """Client ids of an edge, in increasing order."""
        start = sum(self.sizes[:edge])
        return tuple(range(start, start + self.sizes[edge]))

    def edge_of(self, client):
        """Edge id holding a client."""
        bound = 0
        for edge, size in enumerate(self.sizes):
            bound += size
            if client < bound:
                return edge
        raise ConfigurationError('Client {} out of range for {} clients.'
                                 .format(client, self.n), client=client)

    def weights(self, weighting):
        """Cloud coefficients per edge: m^l/n ('weighted') or 1/s."""
        if weighting == 'weighted':
            return tuple(m / self.n for m in self.sizes)
        if weighting == 'uniform':
            return tuple(1.0 / self.s for _ in self.sizes)
        msg = 'Unknown weighting \'{}\'; expected one of {}.'\
            .format(weighting, ', '.join(WEIGHTINGS))
        raise ConfigurationError(msg, weighting=weighting)

    def to_dict(self):
        return {'n': self.n, 's': self.s, 'sizes': list(self.sizes)}


def build_association(n, s, sizes=None):
    """Assign clients 0..n-1 contiguously to s edges.

    Args:
        n (int): Number of clients.
        s (int): Number of edge servers.
        sizes (list or None): m^l per edge. Default is an even split, with the
            first n % s edges taking one extra client.

    Returns:
        Topology

    Raises:
        ConfigurationError: Sizes do not sum to n, a size is below 1, or the
            number of sizes differs from s.

    Examples:
        >>> build_association(20, 2, [18, 2]).members(1)
        (18, 19)
        >>> build_association(5, 2).sizes
        (3, 2)
    """
    if s < 1 or n < s:
        raise ConfigurationError('Need n >= s >= 1 (got n={}, s={}).'
                                 .format(n, s), n=n, s=s)
    if sizes is None:
        sizes = [n // s + (1 if edge < n % s else 0) for edge in range(s)]
    sizes = tuple(int(m) for m in sizes)
    if len(sizes) != s:
        msg = 'Expected {} edge sizes, got {}.'.format(s, len(sizes))
        raise ConfigurationError(msg, sizes=sizes)
    if any(m < 1 for m in sizes):
        raise ConfigurationError('Every edge needs at least one client.',
                                 sizes=sizes)
    if sum(sizes) != n:
        msg = 'Edge sizes {} sum to {}, expected n={}.'.format(
            list(sizes), sum(sizes), n)
        raise ConfigurationError(msg, sizes=sizes, n=n)
    return Topology(sizes)


def effective_cluster_size(topology):
    """Average clients per edge, n/s.

    >>> effective_cluster_size(build_association(20, 4))
    5.0
    """
    return topology.n / topology.s


@dataclass(frozen=True)
class DataPartition:
    """Disjoint per-client sample index sets.

    Attributes:
        indices (tuple): One sorted int array per client.
        alpha (float or None): Dirichlet concentration, None for a uniform
            random split.
    """
    indices: tuple
    alpha: float = None

    @property
    def sizes(self):
        return tuple(len(idx) for idx in self.indices)

    def to_dict(self):
        return {'alpha': self.alpha, 'sizes': list(self.sizes)}


def _check_samples(num_samples, n):
    if n < 1:
        raise ConfigurationError('Need at least one client.', n=n)
    if num_samples < n:
        msg = 'Cannot split {} samples over {} clients.'.format(
            num_samples, n)
        raise InputError(msg, samples=num_samples, clients=n)


def dirichlet_partition(labels, n, alpha, rng):
    """Split samples over clients with Dir(alpha) class proportions.

    Per class, the samples are shuffled and cut at the cumulative sums of a
    Dir(alpha) draw over clients. A client left empty takes one sample from
    the currently largest client.

    Args:
        labels (array-like): Per-sample class labels.
        n (int): Number of clients.
        alpha (float): Concentration, > 0. Large values approach IID.
        rng (RngStream): Randomness.

    Returns:
        DataPartition

    Raises:
        ConfigurationError: alpha <= 0.
        InputError: Fewer samples than clients.
    """
    labels = np.asarray(labels)
    _check_samples(len(labels), n)
    if not alpha > 0:
        raise ConfigurationError('Dirichlet alpha must be positive.',
                                 alpha=alpha)
    gen = rng.generator()
    shards = [[] for _ in range(n)]
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        gen.shuffle(members)
        proportions = gen.dirichlet(np.repeat(float(alpha), n))
        cuts = (np.cumsum(proportions) * len(members)).astype(int)[:-1]
        for client, part in enumerate(np.split(members, cuts)):
            shards[client].extend(part.tolist())
    for client in range(n):
        if not shards[client]:
            largest = max(range(n), key=lambda i: len(shards[i]))
            shards[client].append(shards[largest].pop())
            logger.debug('Client %d was empty; took one sample from client '
                         '%d.', client, largest)
    return DataPartition(tuple(np.sort(np.asarray(s, dtype=np.int64))
                               for s in shards), float(alpha))


def iid_partition(num_samples, n, rng):
    """Uniform random split into n near-equal shards."""
    _check_samples(num_samples, n)
    order = rng.generator().permutation(num_samples)
    return DataPartition(tuple(np.sort(part)
                               for part in np.array_split(order, n)))


def class_skew(partition, labels):
    """Largest deviation of a client's class share from the global share.

    Args:
        partition (DataPartition): Client shards.
        labels (array-like): Per-sample class labels.

    Returns:
        float: max over clients and classes of |share_ic - share_c|.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    overall = np.array([np.mean(labels == c) for c in classes])
    skew = 0.0
    for idx in partition.indices:
        local = labels[idx]
        shares = np.array([np.mean(local == c) for c in classes])
        skew = max(skew, float(np.max(np.abs(shares - overall))))
    return skew
