"""Unbiased random quantizers and their variance certification.

Two compressors are provided besides the identity:

- random sparsification keeps r of d coordinates, chosen uniformly without
  replacement, and rescales them by d/r;
- stochastic rounding maps every coordinate to one of `levels` + 1 magnitudes
  ||x|| * l / levels, rounding up with probability equal to the remainder.

Both satisfy E[Q(x)] = x and E||Q(x) - x||^2 <= q ||x||^2, with q given by
`variance_factor`.
"""
import logging
from dataclasses import dataclass

import numpy as np

from hierq.definitions.constants import (
    MEAN_SIGMAS, MIN_CERTIFY_DRAWS, QUANTIZER_KINDS, VARIANCE_SLACK)
from hierq.definitions.error import ConfigurationError
from hierq.definitions.utils import as_vector, norm_sq
from hierq.rng import RngStream

logger = logging.getLogger(__name__)

IDENTITY, SPARSIFICATION, ROUNDING = QUANTIZER_KINDS


@dataclass(frozen=True)
class QuantizerSpec:
    """A compressor definition.

    Attributes:
        kind (str): One of QUANTIZER_KINDS.
        dim (int): Vector dimension p.
        r (int or None): Kept coordinates, random sparsification only.
        levels (int or None): Quantization levels s >= 1, stochastic rounding
            only.
    """
    kind: str
    dim: int
    r: int = None
    levels: int = None

    def __post_init__(self):
        if self.kind not in QUANTIZER_KINDS:
            msg = 'Unknown quantizer kind \'{}\'; expected one of {}.'\
                .format(self.kind, ', '.join(QUANTIZER_KINDS))
            raise ConfigurationError(msg, kind=self.kind)
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ConfigurationError('Quantizer dim must be a positive '
                                     'integer.', dim=self.dim)
        if self.kind == SPARSIFICATION:
            if self.r is None or not 1 <= self.r <= self.dim:
                msg = 'Random sparsification needs 1 <= r <= dim ' \
                      '(got r={}, dim={}).'.format(self.r, self.dim)
                raise ConfigurationError(msg, r=self.r, dim=self.dim)
        elif self.r is not None:
            raise ConfigurationError('Only random sparsification takes r.')
        if self.kind == ROUNDING:
            if self.levels is None or self.levels < 1:
                msg = 'Stochastic rounding needs levels >= 1 (got {}).'\
                    .format(self.levels)
                raise ConfigurationError(msg, levels=self.levels)
        elif self.levels is not None:
            raise ConfigurationError('Only stochastic rounding takes levels.')

    @classmethod
    def identity(cls, dim):
        """Full-precision pass-through."""
        return cls(IDENTITY, dim)

    @classmethod
    def sparsification(cls, dim, r):
        """Random sparsification keeping r of dim coordinates."""
        return cls(SPARSIFICATION, dim, r=r)

    @classmethod
    def rounding(cls, dim, levels):
        """Stochastic rounding with the given number of levels."""
        return cls(ROUNDING, dim, levels=levels)

    @classmethod
    def from_bits(cls, dim, bits):
        """Stochastic rounding sized by a per-coordinate bit budget.

        One bit carries the sign, so b bits give 2**(b-1) levels.

        Args:
            dim (int): Vector dimension.
            bits (int): Bits per coordinate, >= 1.

        Returns:
            QuantizerSpec
        """
        if bits < 1:
            raise ConfigurationError('Bit width must be >= 1.', bits=bits)
        return cls.rounding(dim, 2 ** (bits - 1))

    @classmethod
    def from_dict(cls, data, dim):
        """Build from a config mapping with 'kind' and optional parameters."""
        kind = data.get('kind', IDENTITY)
        if kind == ROUNDING and data.get('bits') is not None:
            return cls.from_bits(dim, data['bits'])
        return cls(kind, dim, r=data.get('r'), levels=data.get('levels'))

    def to_dict(self):
        """Config mapping, inverse of `from_dict`."""
        data = {'kind': self.kind, 'dim': self.dim}
        if self.r is not None:
            data['r'] = self.r
        if self.levels is not None:
            data['levels'] = self.levels
        return data

    @property
    def params_label(self):
        """Short parameter label for reports, e.g. 'r=5'."""
        if self.kind == SPARSIFICATION:
            return 'r={}'.format(self.r)
        if self.kind == ROUNDING:
            return 'levels={}'.format(self.levels)
        return ''


def _generator(rng):
    """Accept a RngStream or an already positioned numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def quantize(spec, x, rng):
    """Draw one sample of Q(x).

    Args:
        spec (QuantizerSpec): Compressor definition.
        x (array-like): Vector of length spec.dim.
        rng (RngStream or numpy.random.Generator): Randomness source.

    Returns:
        numpy.ndarray: The compressed (decoded) vector. The identity returns x
        itself.

    Raises:
        DimensionMismatchError: len(x) != spec.dim.
        InputError: x has non-finite entries.
    """
    x = as_vector(x, spec.dim, name='quantizer input')
    if spec.kind == IDENTITY:
        return x
    gen = _generator(rng)
    if spec.kind == SPARSIFICATION:
        kept = gen.choice(spec.dim, size=spec.r, replace=False, shuffle=False)
        out = np.zeros(spec.dim)
        out[kept] = (spec.dim / spec.r) * x[kept]
        return out
    return _round(x, spec.levels, gen.random(spec.dim))


def _round(x, levels, uniforms):
    """Stochastic rounding of x given uniforms of matching shape."""
    norm = np.sqrt(norm_sq(x))
    if norm == 0.0:
        return np.zeros_like(x)
    scaled = np.abs(x) / norm * levels
    lower = np.floor(scaled)
    level = lower + (uniforms < scaled - lower)
    return norm * np.sign(x) * (level / levels)


def quantize_many(spec, x, rng, draws):
    """Draw `draws` independent samples of Q(x) at once.

    Args:
        spec (QuantizerSpec): Compressor definition.
        x (numpy.ndarray): Finite vector of length spec.dim.
        rng (RngStream or numpy.random.Generator): Randomness source.
        draws (int): Number of samples.

    Returns:
        numpy.ndarray: Array of shape (draws, dim).
    """
    x = as_vector(x, spec.dim, name='quantizer input')
    if spec.kind == IDENTITY:
        return np.tile(x, (draws, 1))
    gen = _generator(rng)
    if spec.kind == SPARSIFICATION:
        keys = gen.random((draws, spec.dim))
        kept = np.argpartition(keys, spec.r - 1, axis=1)[:, :spec.r]
        mask = np.zeros((draws, spec.dim))
        np.put_along_axis(mask, kept, 1.0, axis=1)
        return mask * ((spec.dim / spec.r) * x)
    norm = np.sqrt(norm_sq(x))
    if norm == 0.0:
        return np.zeros((draws, spec.dim))
    scaled = np.abs(x) / norm * spec.levels
    lower = np.floor(scaled)
    level = lower + (gen.random((draws, spec.dim)) < scaled - lower)
    return norm * np.sign(x) * (level / spec.levels)


def variance_factor(spec):
    """Tightest q with E||Q(x) - x||^2 <= q ||x||^2 for all x.

    Stochastic rounding uses min(d / s**2, sqrt(d) / s), the standard bound
    from the quantized-SGD literature.

    Args:
        spec (QuantizerSpec): Compressor definition.

    Returns:
        float: Non-negative variance factor q.

    Examples:
        >>> variance_factor(QuantizerSpec.sparsification(100, 5))
        19.0
        >>> variance_factor(QuantizerSpec.identity(3))
        0.0
    """
    if spec.kind == IDENTITY:
        return 0.0
    if spec.kind == SPARSIFICATION:
        return spec.dim / spec.r - 1.0
    d, s = float(spec.dim), float(spec.levels)
    return min(d / s ** 2, np.sqrt(d) / s)


@dataclass(frozen=True)
class ProbeResult:
    """Certification outcome for one probe vector."""
    probe_id: int
    mean_dev: float
    var_ratio: float
    q_bound: float
    unbiased: bool
    variance_ok: bool
    zero_probe: bool = False

    @property
    def passed(self):
        return self.unbiased and self.variance_ok


@dataclass(frozen=True)
class CertificationReport:
    """Per-probe results of `certify_assumption3`."""
    spec: QuantizerSpec
    draws: int
    results: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def rows(self):
        """Rows keyed by BENCH_COLUMNS."""
        return [{
            'kind': self.spec.kind,
            'params': self.spec.params_label,
            'probe_id': r.probe_id,
            'mean_dev': r.mean_dev,
            'var_ratio': '' if r.zero_probe else r.var_ratio,
            'q_bound': r.q_bound,
            'pass': r.passed
        } for r in self.results]


def certify_assumption3(spec, probes, draws, rng, mean_sigmas=MEAN_SIGMAS,
                        variance_slack=VARIANCE_SLACK, chunk=10000):
    """Monte-Carlo check of unbiasedness and the variance bound.

    For each probe x, the coordinate-wise mean of `draws` samples of Q(x) must
    lie within `mean_sigmas` standard errors of x, and the mean of
    ||Q(x) - x||^2 / ||x||^2 must not exceed q * (1 + variance_slack). Zero
    probes skip the ratio and must map to exactly zero.

    Args:
        spec (QuantizerSpec): Compressor under test.
        probes (iterable): Probe vectors of length spec.dim.
        draws (int): Samples per probe, at least MIN_CERTIFY_DRAWS.
        rng (RngStream): Parent stream; probe i reads child ('probe', i).
        mean_sigmas (float): Tolerance on the mean, in standard errors.
        variance_slack (float): Relative slack on the variance bound.
        chunk (int): Samples drawn per batch.

    Returns:
        CertificationReport

    Raises:
        ConfigurationError: Too few draws.
    """
    if draws < MIN_CERTIFY_DRAWS:
        msg = 'Certification needs at least {} draws (got {}).'\
            .format(MIN_CERTIFY_DRAWS, draws)
        raise ConfigurationError(msg, draws=draws)
    q = variance_factor(spec)
    results = []
    for probe_id, probe in enumerate(probes):
        x = as_vector(probe, spec.dim, name='probe {}'.format(probe_id))
        gen = _generator(rng.child('probe', probe_id)
                         if isinstance(rng, RngStream) else rng)
        sum_err = np.zeros(spec.dim)
        sum_sq = np.zeros(spec.dim)
        done = 0
        while done < draws:
            size = min(chunk, draws - done)
            err = quantize_many(spec, x, gen, size) - x
            sum_err += err.sum(axis=0)
            sum_sq += (err * err).sum(axis=0)
            done += size
        mean_err = sum_err / draws
        x_norm_sq = norm_sq(x)
        if x_norm_sq == 0.0:
            logger.warning('Warning! Probe %d is the zero vector; only exact '
                           'zero output is checked.', probe_id)
            exact = bool(np.all(sum_sq == 0.0))
            results.append(ProbeResult(probe_id, float(np.sqrt(
                norm_sq(mean_err))), float('nan'), q, exact, True, True))
            continue
        var = np.maximum(sum_sq / draws - mean_err ** 2, 0.0) \
            * draws / (draws - 1)
        stderr = np.sqrt(var / draws)
        atol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
        unbiased = bool(np.all(np.abs(mean_err) <= mean_sigmas * stderr
                               + atol))
        var_ratio = float(sum_sq.sum() / draws / x_norm_sq)
        variance_ok = var_ratio <= q * (1.0 + variance_slack) + 1e-12
        results.append(ProbeResult(probe_id, float(np.sqrt(norm_sq(
            mean_err))), var_ratio, q, unbiased, variance_ok))
        logger.debug('%s %s probe %d: mean_dev=%.3g var_ratio=%.4g q=%.4g',
                     spec.kind, spec.params_label, probe_id,
                     results[-1].mean_dev, var_ratio, q)
    return CertificationReport(spec, draws, tuple(results))
