"""Loss models, stochastic gradient oracles and datasets.

Two loss kinds are supported. The quadratic kind gives client i the loss
f_i(x) = 1/2 (x - c_i)^T A (x - c_i) with diagonal A, and a gradient oracle
adding isotropic Gaussian noise of known total variance, so that the
smoothness constant L and the noise bound sigma^2 are exact. The logistic kind
fits binary labels with ridge-regularized logistic regression and samples
mini-batches with replacement; its sigma^2 is a Monte-Carlo estimate.

The global loss weights clients by their sample counts.
"""
import logging
from dataclasses import dataclass

import numpy as np

from hierq.definitions.constants import LOSS_KINDS, SIGMA2_ESTIMATE_DRAWS
from hierq.definitions.error import ConfigurationError, InputError
from hierq.definitions.utils import as_vector, norm_sq
from hierq.rng import RngStream

logger = logging.getLogger(__name__)

QUADRATIC, LOGISTIC = LOSS_KINDS


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LossModel:
    """Immutable per-client loss functions.

    Build with `LossModel.quadratic`, `LossModel.logistic` or
    `LossModel.from_partition` rather than the constructor.

    Attributes:
        kind (str): 'quadratic' or 'logistic'.
        dim (int): Parameter dimension p.
        n_clients (int): Number of clients n.
        batch_size (int): Mini-batch size b.
        client_sizes (numpy.ndarray): D_i, weights of the global loss.
        iid (bool): Whether every client's gradient is unbiased for the
            global loss.
    """

    def __init__(self, kind, dim, client_sizes, batch_size=1, iid=True,
                 curvature=None, centers=None, noise_sigma=0.0,
                 features=None, labels=None, ridge=0.0):
        if kind not in LOSS_KINDS:
            msg = 'Unknown loss kind \'{}\'; expected one of {}.'\
                .format(kind, ', '.join(LOSS_KINDS))
            raise ConfigurationError(msg, kind=kind)
        if int(batch_size) < 1:
            raise ConfigurationError('Batch size must be >= 1.',
                                     batch_size=batch_size)
        self.kind = kind
        self.dim = int(dim)
        self.client_sizes = np.array(client_sizes, dtype=np.float64)
        self.n_clients = len(self.client_sizes)
        self.batch_size = int(batch_size)
        self.iid = bool(iid)
        self.curvature = curvature
        self.centers = centers
        self.noise_sigma = float(noise_sigma)
        self.features = features
        self.labels = labels
        self.ridge = float(ridge)
        for array in (self.curvature, self.centers, self.client_sizes):
            if array is not None:
                array.setflags(write=False)

    @classmethod
    def quadratic(cls, curvature, centers, noise_sigma=0.0, batch_size=1,
                  client_sizes=None):
        """Quadratic clients sharing a diagonal curvature.

        Args:
            curvature (array-like): Diagonal of A, entries > 0.
            centers (array-like): One center per client, shape (n, p); a
                single vector of length p gives one client.
            noise_sigma (float): Total standard deviation of gradient noise.
            batch_size (int): Noise variance is divided by this.
            client_sizes (array-like or None): Global loss weights, default
                all ones.

        Returns:
            LossModel
        """
        curvature = as_vector(curvature, name='curvature').copy()
        if np.any(curvature <= 0):
            raise ConfigurationError('Curvature entries must be positive.')
        centers = np.atleast_2d(np.array(centers, dtype=np.float64))
        if centers.shape[1] != curvature.shape[0]:
            msg = 'Centers have dimension {}, curvature has {}.'.format(
                centers.shape[1], curvature.shape[0])
            raise ConfigurationError(msg)
        if not np.all(np.isfinite(centers)):
            raise InputError('Centers contain non-finite entries.')
        if noise_sigma < 0:
            raise ConfigurationError('Noise sigma must be non-negative.',
                                     noise_sigma=noise_sigma)
        n = centers.shape[0]
        sizes = np.ones(n) if client_sizes is None else client_sizes
        iid = bool(np.all(centers == centers[0]))
        return cls(QUADRATIC, curvature.shape[0], sizes,
                   batch_size=batch_size, iid=iid, curvature=curvature,
                   centers=centers, noise_sigma=noise_sigma)

    @classmethod
    def logistic(cls, features, labels, ridge=0.0, batch_size=1, iid=True):
        """Logistic regression clients.

        Args:
            features (list): Per-client feature matrices, shape (D_i, p).
            labels (list): Per-client label vectors with values in {0, 1}.
            ridge (float): L2 regularization weight, >= 0.
            batch_size (int): Mini-batch size b.
            iid (bool): Whether clients share one data distribution.

        Returns:
            LossModel
        """
        if len(features) != len(labels) or not features:
            raise ConfigurationError('Need one label vector per client '
                                     'feature matrix.')
        features = [np.array(a, dtype=np.float64) for a in features]
        labels = [np.array(y, dtype=np.float64) for y in labels]
        dim = features[0].shape[1]
        for i, (a, y) in enumerate(zip(features, labels)):
            if a.ndim != 2 or a.shape[1] != dim or a.shape[0] != len(y):
                msg = 'Client {} data has shape {} with {} labels.'\
                    .format(i, a.shape, len(y))
                raise ConfigurationError(msg, client=i)
            if a.shape[0] == 0:
                raise ConfigurationError('Client {} has no samples.'
                                         .format(i), client=i)
            if not np.all(np.isfinite(a)):
                raise InputError('Client {} features are not finite.'
                                 .format(i), client=i)
            if not np.all((y == 0) | (y == 1)):
                raise InputError('Client {} labels must be 0 or 1.'
                                 .format(i), client=i)
            a.setflags(write=False)
            y.setflags(write=False)
        if ridge < 0:
            raise ConfigurationError('Ridge must be non-negative.',
                                     ridge=ridge)
        return cls(LOGISTIC, dim, [a.shape[0] for a in features],
                   batch_size=batch_size, iid=iid, features=features,
                   labels=labels, ridge=ridge)

    @classmethod
    def from_partition(cls, features, labels, partition, ridge=0.0,
                       batch_size=1, iid=None):
        """Logistic clients holding the shards of a DataPartition."""
        if iid is None:
            iid = partition.alpha is None
        return cls.logistic([features[idx] for idx in partition.indices],
                            [labels[idx] for idx in partition.indices],
                            ridge=ridge, batch_size=batch_size, iid=iid)

    def check(self, x):
        """Validate x as a parameter vector of this model."""
        return as_vector(x, self.dim, name='parameter vector')

    def client_loss(self, x, client):
        """Exact f_i(x)."""
        if self.kind == QUADRATIC:
            diff = x - self.centers[client]
            return 0.5 * float(np.dot(diff, self.curvature * diff))
        z = self.features[client] @ x
        losses = np.logaddexp(0.0, z) - self.labels[client] * z
        return float(np.mean(losses)) + 0.5 * self.ridge * norm_sq(x)

    def client_gradient(self, x, client):
        """Exact gradient of f_i at x."""
        if self.kind == QUADRATIC:
            return self.curvature * (x - self.centers[client])
        a = self.features[client]
        residual = _sigmoid(a @ x) - self.labels[client]
        return a.T @ residual / a.shape[0] + self.ridge * x

    def batch_gradient(self, x, client, gen):
        """One stochastic gradient of f_i at x using generator gen."""
        if self.kind == QUADRATIC:
            grad = self.curvature * (x - self.centers[client])
            if self.noise_sigma == 0.0:
                return grad
            scale = self.noise_sigma / np.sqrt(self.dim * self.batch_size)
            return grad + scale * gen.standard_normal(self.dim)
        a = self.features[client]
        rows = gen.integers(0, a.shape[0], size=self.batch_size)
        batch = a[rows]
        residual = _sigmoid(batch @ x) - self.labels[client][rows]
        return batch.T @ residual / self.batch_size + self.ridge * x

    def global_gradient(self, x):
        """Exact gradient of the global loss."""
        x = self.check(x)
        total = np.zeros(self.dim)
        for i in range(self.n_clients):
            total = total + self.client_sizes[i] * self.client_gradient(x, i)
        return total / self.client_sizes.sum()

    def describe(self):
        """JSON-friendly summary for run metadata."""
        data = {
            'kind': self.kind,
            'dim': self.dim,
            'n_clients': self.n_clients,
            'batch_size': self.batch_size,
            'iid': self.iid
        }
        if self.kind == QUADRATIC:
            data['noise_sigma'] = self.noise_sigma
        else:
            data['ridge'] = self.ridge
            data['client_sizes'] = [int(d) for d in self.client_sizes]
        return data


def global_loss(model, x):
    """Full-batch global loss f(x) = sum_i D_i f_i(x) / sum_i D_i.

    Args:
        model (LossModel): Loss model.
        x (array-like): Parameter vector.

    Returns:
        float

    Raises:
        DimensionMismatchError: len(x) != model.dim.
    """
    x = model.check(x)
    total = 0.0
    for i in range(model.n_clients):
        total += model.client_sizes[i] * model.client_loss(x, i)
    return total / float(model.client_sizes.sum())


class GradOracle:
    """Stochastic gradient source for one client.

    Successive draws advance the oracle's private stream, so an oracle keyed
    by (client, round) yields the same sequence wherever it is evaluated.

    Args:
        model (LossModel): Loss model.
        client (int): Client id.
        stream (RngStream): Private randomness.
    """

    def __init__(self, model, client, stream):
        if not 0 <= client < model.n_clients:
            raise ConfigurationError('Client {} out of range for {} clients.'
                                     .format(client, model.n_clients))
        self.model = model
        self.client = client
        self.stream = stream
        self._gen = None

    def sample(self, x):
        if self._gen is None:
            self._gen = self.stream.generator()
        return self.model.batch_gradient(x, self.client, self._gen)


def stochastic_gradient(oracle, x):
    """Draw one unbiased gradient of the oracle's client loss at x."""
    return oracle.sample(oracle.model.check(x))


def sgd_step(x, g, eta):
    """Return x - eta * g.

    Examples:
        >>> sgd_step(np.array([1.0, 1.0]), np.array([1.0, -1.0]), 0.5)
        array([0.5, 1.5])
    """
    if not eta > 0:
        raise ConfigurationError('Step size must be positive.', eta=eta)
    return x - eta * g


@dataclass(frozen=True)
class SmoothnessConstants:
    """Constants of the smoothness and noise assumptions.

    Attributes:
        L (float): Smoothness constant.
        sigma2 (float): Gradient noise variance bound.
        f_star (float): Lower bound of the global loss.
        sigma2_is_estimate (bool): sigma2 is a Monte-Carlo estimate.
    """
    L: float
    sigma2: float
    f_star: float = 0.0
    sigma2_is_estimate: bool = False

    def to_dict(self):
        return {'L': self.L, 'sigma2': self.sigma2, 'f_star': self.f_star,
                'sigma2_is_estimate': self.sigma2_is_estimate}


def constants(model, x0=None, seed=0, draws=SIGMA2_ESTIMATE_DRAWS):
    """Smoothness constant, noise bound and loss lower bound.

    Args:
        model (LossModel): Loss model.
        x0 (array-like or None): Point of the logistic noise estimate,
            default the origin.
        seed (int): Seed of the logistic noise estimate.
        draws (int): Mini-batch draws per client of the estimate.

    Returns:
        SmoothnessConstants
    """
    if model.kind == QUADRATIC:
        return SmoothnessConstants(
            L=lipschitz(model),
            sigma2=model.noise_sigma ** 2 / model.batch_size)
    x0 = np.zeros(model.dim) if x0 is None else model.check(x0)
    root = RngStream(seed, ('sigma2',))
    sigma2 = 0.0
    for i in range(model.n_clients):
        gen = root.child(i).generator()
        exact = model.client_gradient(x0, i)
        total = 0.0
        for _ in range(draws):
            diff = model.batch_gradient(x0, i, gen) - exact
            total += norm_sq(diff)
        sigma2 = max(sigma2, total / draws)
    smoothness = lipschitz(model)
    logger.debug('Logistic constants: L=%.4g sigma2~%.4g', smoothness, sigma2)
    return SmoothnessConstants(L=smoothness, sigma2=sigma2,
                               sigma2_is_estimate=True)


def lipschitz(model):
    """Smoothness constant L of every client loss.

    Quadratic: the largest curvature. Logistic: max ||a||^2 / 4 + ridge.
    """
    if model.kind == QUADRATIC:
        return float(np.max(model.curvature))
    return max(float(np.max(np.sum(a * a, axis=1)))
               for a in model.features) / 4.0 + model.ridge


def synthetic_blobs(num_samples, dim, seed, separation=2.0):
    """Two Gaussian blobs with binary labels.

    Args:
        num_samples (int): Number of samples, split evenly between classes.
        dim (int): Feature dimension.
        seed (int): Seed.
        separation (float): Distance between the blob means.

    Returns:
        tuple: (features (num_samples, dim), labels (num_samples,)).
    """
    gen = RngStream(seed, ('blobs',)).generator()
    labels = np.arange(num_samples) % 2
    direction = np.zeros(dim)
    direction[0] = separation / 2.0
    features = gen.standard_normal((num_samples, dim)) \
        + np.where(labels[:, None] == 1, direction, -direction)
    return features, labels.astype(np.float64)


def load_csv(path):
    """Read a labelled dataset: one row per sample, label first.

    Args:
        path (str): CSV file path.

    Returns:
        tuple: (features, labels).

    Raises:
        InputError: File unreadable or labels not in {0, 1}.
    """
    try:
        data = np.loadtxt(path, delimiter=',', ndmin=2)
    except (OSError, ValueError) as err:
        raise InputError('Could not read dataset {}: {}'.format(path, err),
                         path=path)
    labels = data[:, 0]
    if not np.all((labels == 0) | (labels == 1)):
        raise InputError('Dataset labels must be 0 or 1.', path=path)
    return data[:, 1:], labels
