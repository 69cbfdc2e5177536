"""Closed-form convergence bounds and optimal aggregation intervals.

All formulas are evaluated as displayed, in double precision, with no
simplification. The average squared gradient norm over K cloud rounds is
bounded by three terms: an optimization term 2(f0 - f*)/(eta K tau1 tau2), an
interval term driven by client drift, and a noise term driven by the quantizer
variances. The bound is valid when G >= 0.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from hierq.definitions.error import (
    ConditionViolatedError, ConfigurationError, InputError)
from hierq.definitions.utils import ceil_int

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the convergence bound.

    Attributes:
        L (float): Smoothness constant.
        eta (float): Step size.
        sigma2 (float): Gradient noise variance bound.
        n (int): Clients.
        s (int): Edge servers.
        tau1 (float): Client-edge interval.
        tau2 (float): Edge-cloud interval.
        q1 (float): Client-edge quantizer variance factor.
        q2 (float): Edge-cloud quantizer variance factor.
        K (int): Cloud rounds.
        f0 (float): Initial loss f(x0).
        f_star (float): Loss lower bound.
    """
    L: float
    eta: float
    sigma2: float
    n: int
    s: int
    tau1: float = 1
    tau2: float = 1
    q1: float = 0.0
    q2: float = 0.0
    K: int = 1
    f0: float = 1.0
    f_star: float = 0.0

    def __post_init__(self):
        if not (self.L > 0 and self.eta > 0):
            raise ConfigurationError('L and eta must be positive.',
                                     L=self.L, eta=self.eta)
        if self.sigma2 < 0 or self.q1 < 0 or self.q2 < 0:
            raise ConfigurationError('sigma2, q1 and q2 must be '
                                     'non-negative.')
        if not self.n >= self.s >= 1:
            raise ConfigurationError('Need n >= s >= 1.', n=self.n, s=self.s)
        if not (self.tau1 > 0 and self.tau2 > 0 and self.K > 0):
            raise ConfigurationError('tau1, tau2 and K must be positive.')
        if self.f0 < self.f_star:
            raise ConfigurationError('f0 must be at least f_star.',
                                     f0=self.f0, f_star=self.f_star)

    def with_intervals(self, tau1, tau2):
        return replace(self, tau1=tau1, tau2=tau2)

    @property
    def cluster_ratio(self):
        """(1 + q1) / (n / s)."""
        return (1 + self.q1) / (self.n / self.s)


@dataclass(frozen=True)
class BoundValue:
    """A bound evaluation with its validity flag (G >= 0)."""
    value: float
    valid: bool
    G: float


def compute_G(p):
    """G = 1 - L^2 eta^2 [drift terms] - L eta (1 + q2)(tau1 tau2 + q1 tau1/n).

    Args:
        p (BoundParams): Parameters.

    Returns:
        float

    Examples:
        >>> p = BoundParams(L=1.0, eta=0.01, sigma2=0.0, n=10, s=1, tau1=5,
        ...                 tau2=2, q1=1.0)
        >>> round(compute_G(p), 12)
        0.891
    """
    tau1, tau2 = p.tau1, p.tau2
    drift = tau1 * (tau1 - 1) / 2 \
        + tau1 * tau2 * (tau2 * (tau2 - 1) / 2 + p.q1 * tau2)
    return 1 - p.L ** 2 * p.eta ** 2 * drift \
        - p.L * p.eta * (1 + p.q2) * (tau1 * tau2 + p.q1 * tau1 / p.n)


def theorem1_terms(p):
    """The optimization, interval and noise terms of the bound.

    Returns:
        tuple: (optimization, interval, noise), summing to the bound.
    """
    optimization = 2 * (p.f0 - p.f_star) / (p.eta * p.K * p.tau1 * p.tau2)
    interval = (p.L ** 2 * p.eta ** 2 / 2) \
        * ((1 + p.q1) / (p.n / p.s) * p.tau1 * (p.tau2 - 1)
           + (p.tau1 - 1)) * p.sigma2
    noise = p.L * p.eta * (1 / p.n) * (1 + p.q1) * (1 + p.q2) * p.sigma2
    return optimization, interval, noise


def theorem1_rhs(p):
    """Bound on (1/K) sum_k E||grad f(x_k)||^2.

    Args:
        p (BoundParams): Parameters.

    Returns:
        BoundValue: The bound, flagged invalid when G < 0.
    """
    optimization, interval, noise = theorem1_terms(p)
    G = compute_G(p)
    return BoundValue(optimization + interval + noise, G >= 0, G)


def remark1_terms(p):
    """Bound terms with eta = 1 / (L sqrt(K tau1 tau2)) substituted.

    The eta field of p is ignored.

    Returns:
        tuple: (optimization, interval, noise).
    """
    total = p.K * p.tau1 * p.tau2
    optimization = 2 * p.L * (p.f0 - p.f_star) / np.sqrt(total)
    interval = 1 / total * 0.5 \
        * ((1 + p.q1) / (p.n / p.s) * p.tau1 * (p.tau2 - 1)
           + (p.tau1 - 1)) * p.sigma2
    noise = 1 / np.sqrt(total) * (1 + p.q1) * (1 + p.q2) * p.sigma2 / p.n
    return optimization, interval, noise


def remark1_eta(p):
    """Step size 1 / (L sqrt(K tau1 tau2))."""
    return 1 / (p.L * np.sqrt(p.K * p.tau1 * p.tau2))


@dataclass(frozen=True)
class HeteroVariances:
    """Per-client noise variances grouped by edge.

    With all variances equal to sigma^2, sigma_e^2 = s sigma^2 / n, so the
    heterogeneous bound coincides with the homogeneous one: the factor s/n of
    the interval term moves into sigma_e^2.

    Attributes:
        sigma2 (tuple): sigma_i^2 per client.
        sizes (tuple): m^l per edge; clients assigned contiguously.
    """
    sigma2: tuple
    sizes: tuple

    def __post_init__(self):
        if len(self.sigma2) != sum(self.sizes):
            raise ConfigurationError('Need one variance per client.',
                                     clients=sum(self.sizes),
                                     variances=len(self.sigma2))
        if any(v < 0 for v in self.sigma2):
            raise ConfigurationError('Variances must be non-negative.')

    @classmethod
    def for_topology(cls, sigma2, topology):
        return cls(tuple(float(v) for v in sigma2), tuple(topology.sizes))

    @property
    def sigma_c2(self):
        """(1/n) sum_i sigma_i^2."""
        return sum(self.sigma2) / len(self.sigma2)

    @property
    def sigma_e2(self):
        """(1/n) sum_l (1/m^l) sum_{j in C^l} sigma_j^2."""
        total, start = 0.0, 0
        for m in self.sizes:
            total += sum(self.sigma2[start:start + m]) / m
            start += m
        return total / len(self.sigma2)


def theorem1_rhs_hetero(p, h):
    """Bound with per-client noise variances; p.sigma2 is ignored.

    Args:
        p (BoundParams): Parameters.
        h (HeteroVariances): Per-client variances.

    Returns:
        BoundValue
    """
    sigma_c2, sigma_e2 = h.sigma_c2, h.sigma_e2
    optimization = 2 * (p.f0 - p.f_star) / (p.eta * p.K * p.tau1 * p.tau2)
    interval = (p.L ** 2 * p.eta ** 2 / 2) \
        * ((p.tau1 - 1) * sigma_c2
           + (1 + p.q1) * p.tau1 * (p.tau2 - 1) * sigma_e2)
    noise = p.L * p.eta * (1 / p.n) * (1 + p.q1) * (1 + p.q2) * sigma_c2
    G = compute_G(p)
    return BoundValue(optimization + interval + noise, G >= 0, G)


def variance_term_rewrite(p):
    """Noise-dependent part of the bound regrouped by tau1 tau2 and tau1.

    At fixed tau1 tau2, the coefficient of tau1 is 1 - (1 + q1)/(n/s): larger
    tau1 loosens the bound iff q1 < n/s - 1.

    >>> p = BoundParams(L=1.0, eta=0.1, sigma2=1.0, n=20, s=4, q1=4.0,
    ...                 tau1=3, tau2=20)
    >>> p2 = p.with_intervals(30, 2)
    >>> abs(variance_term_rewrite(p) - variance_term_rewrite(p2)) < 1e-15
    True
    """
    ratio = (1 + p.q1) / (p.n / p.s)
    return (p.L ** 2 * p.eta ** 2 / 2) \
        * (ratio * p.tau1 * p.tau2 + (1 - ratio) * p.tau1 - 1) * p.sigma2 \
        + p.L * p.eta * (1 + p.q1) * (1 + p.q2) * p.sigma2 / p.n


def flip_threshold(n, s):
    """q1 at which the tau1 split stops mattering, n/s - 1.

    >>> flip_threshold(20, 4)
    4.0
    """
    return n / s - 1


def time_budget_bound(p, d_comp, d_de, d_ec, T):
    """Bound reached within a wall-clock budget T.

    K is replaced by T / (tau1 tau2 D_comp + tau2 D_de + D_ec), so the
    optimization term becomes 2(f0 - f*)/(eta T) (D_comp + D_de/tau1 +
    D_ec/(tau1 tau2)). p.K is ignored; tau1 and tau2 may be real.

    Args:
        p (BoundParams): Parameters.
        d_comp (float): Seconds per local iteration.
        d_de (float): Seconds per client-edge upload.
        d_ec (float): Seconds per edge-cloud upload.
        T (float): Budget in seconds.

    Returns:
        float

    Raises:
        InputError: T <= 0 or a zero-cost round.

    Examples:
        >>> p = BoundParams(L=1.0, eta=0.5, sigma2=0.0, n=1, s=1, f0=1.0)
        >>> time_budget_bound(p, 1.0, 0.0, 0.0, 8.0)
        0.5
    """
    if not T > 0:
        raise InputError('Time budget must be positive.', T=T)
    if not p.tau1 * p.tau2 * d_comp + p.tau2 * d_de + d_ec > 0:
        raise InputError('A cloud round must take positive time.')
    optimization = 2 * (p.f0 - p.f_star) / (p.eta * T) \
        * (d_comp + d_de / p.tau1 + d_ec / (p.tau1 * p.tau2))
    _, interval, noise = theorem1_terms(p)
    return optimization + interval + noise


@dataclass(frozen=True)
class OptimalIntervals:
    """Real-valued minimizers of the budget bound.

    Attributes:
        tau1 (float): tau1*, infinite when sigma2 = 0.
        tau2 (float): tau2*.
        valid (bool): Finite tau1* and G >= 0 at the rounded-up intervals.
    """
    tau1: float
    tau2: float
    valid: bool

    @property
    def rounded(self):
        """Integer intervals (ceil tau1*, ceil tau2*)."""
        return ceil_int(self.tau1), ceil_int(self.tau2)


def optimal_intervals(p, d_de, d_ec, T):
    """Minimize the budget bound over (tau1, tau2).

    Args:
        p (BoundParams): Parameters; tau1, tau2 and K are ignored.
        d_de (float): Seconds per client-edge upload, > 0.
        d_ec (float): Seconds per edge-cloud upload.
        T (float): Budget in seconds.

    Returns:
        OptimalIntervals

    Raises:
        ConditionViolatedError: 1 + q1 >= n/s.
        InputError: T <= 0 or d_de <= 0.

    Examples:
        >>> p = BoundParams(L=1.0, eta=0.01, sigma2=1.0, n=20, s=4)
        >>> round(optimal_intervals(p, 33.0, 330.0, 1e5).tau2, 4)
        6.3246
    """
    ratio = p.cluster_ratio
    if ratio >= 1:
        msg = 'Optimal intervals need 1 + q1 < n/s (got 1 + q1 = {}, ' \
              'n/s = {}); choose tau2 manually.'.format(1 + p.q1, p.n / p.s)
        raise ConditionViolatedError(msg, q1=p.q1, n=p.n, s=p.s)
    if not T > 0:
        raise InputError('Time budget must be positive.', T=T)
    if not d_de > 0:
        raise InputError('Client-edge latency must be positive.', d_de=d_de)
    tau2 = np.sqrt(d_ec / d_de * (1 - ratio) / ratio)
    if p.sigma2 == 0:
        logger.warning('Warning! sigma2 = 0: the budget bound decreases in '
                       'tau1 without limit.')
        return OptimalIntervals(float('inf'), float(tau2), False)
    tau1 = np.sqrt(4 * (p.f0 - p.f_star) * d_de
                   / (p.eta ** 3 * p.L ** 2 * p.sigma2 * T * (1 - ratio)))
    result = OptimalIntervals(float(tau1), float(tau2), True)
    G = compute_G(p.with_intervals(*result.rounded))
    return replace(result, valid=G >= 0)
