"""Adaptive selection of the aggregation intervals.

Training is split into wall-clock windows of length T0. tau2 is fixed from
the ratio of the upload delays. At the first cloud round ending at or after
each window boundary, tau1 is rescaled from its initial value by the square
root of the loss ratio f(now)/f(start), and by sqrt(eta0/eta) when the step
size decays. The loss is the mean of the local training losses reported by
the clients; f* is taken as 0.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from hierq.definitions.error import (
    ConditionViolatedError, ConfigurationError, InputError)
from hierq.definitions.utils import ceil_int
from hierq.engine import Engine
from hierq.quantizers import variance_factor

logger = logging.getLogger(__name__)


@dataclass
class AdaptState:
    """Controller state.

    Attributes:
        tau1_0 (int): tau1 of the first window.
        f0 (float): Loss at the start, > 0.
        eta0 (float): Step size at the start.
        t0_seconds (float): Window length.
        window (int): Index of the current window.
        tau1 (int): tau1 in force.
        history (list): (window, elapsed seconds, tau1) per update.
    """
    tau1_0: int
    f0: float
    eta0: float
    t0_seconds: float
    window: int = 0
    tau1: int = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.tau1_0 < 1:
            raise ConfigurationError('tau1_0 must be >= 1.',
                                     tau1_0=self.tau1_0)
        if not self.f0 > 0:
            raise InputError('Initial loss must be positive.', f0=self.f0)
        if not self.eta0 > 0:
            raise ConfigurationError('eta0 must be positive.', eta0=self.eta0)
        if not self.t0_seconds > 0:
            raise ConfigurationError('Window length must be positive.',
                                     t0_seconds=self.t0_seconds)
        if self.tau1 is None:
            self.tau1 = self.tau1_0


def tau2_from_delays(d_de, d_ec, n, s, q1):
    """Fixed edge-cloud interval from the delay ratio.

    Args:
        d_de (float): Client-edge upload delay, > 0.
        d_ec (float): Edge-cloud upload delay.
        n (int): Clients.
        s (int): Edge servers.
        q1 (float): Client-edge quantizer variance factor.

    Returns:
        int: ceil(sqrt((D_ec/D_de) (1 - r) / r)) with r = (1 + q1)/(n/s).

    Raises:
        ConditionViolatedError: 1 + q1 >= n/s; choose tau2 manually.

    Examples:
        >>> tau2_from_delays(33.0, 330.0, 20, 4, 0.0)
        7
        >>> tau2_from_delays(1.0, 40.0, 20, 4, 0.0)
        13
    """
    ratio = (1 + q1) / (n / s)
    if ratio >= 1:
        msg = 'tau2 from delays needs 1 + q1 < n/s (got 1 + q1 = {}, n/s = ' \
              '{}); choose tau2 manually.'.format(1 + q1, n / s)
        raise ConditionViolatedError(msg, q1=q1, n=n, s=s)
    if not d_de > 0:
        raise InputError('Client-edge delay must be positive.', d_de=d_de)
    return ceil_int(np.sqrt(d_ec / d_de * (1 - ratio) / ratio))


def _check_loss(f_current):
    if not f_current > 0:
        raise InputError('The interval rule needs a positive loss (got {}).'
                         .format(f_current), loss=f_current)


def update_tau1(state, f_current):
    """ceil(sqrt(f_current / f0) tau1_0).

    >>> state = AdaptState(tau1_0=100, f0=2.0, eta0=0.1, t0_seconds=1.0)
    >>> update_tau1(state, 0.5)
    50
    >>> update_tau1(state, 1.0)
    71
    """
    _check_loss(f_current)
    return ceil_int(np.sqrt(f_current / state.f0) * state.tau1_0)


def update_tau1_with_decay(state, f_current, eta_current):
    """ceil(sqrt((eta0 / eta_current) (f_current / f0)) tau1_0).

    >>> state = AdaptState(tau1_0=100, f0=2.0, eta0=0.1, t0_seconds=1.0)
    >>> update_tau1_with_decay(state, 0.5, 0.025)
    100
    """
    _check_loss(f_current)
    if not eta_current > 0:
        raise InputError('Step size must be positive.', eta=eta_current)
    return ceil_int(np.sqrt(state.eta0 / eta_current
                            * (f_current / state.f0)) * state.tau1_0)


class AdaptiveController:
    """Picks tau1 before every cloud round of an engine run.

    Args:
        state (AdaptState): Mutable controller state.
        use_decay (bool): Apply the step-size correction.
        enabled (bool): When False, tau1 stays at tau1_0.
    """

    def __init__(self, state, use_decay=False, enabled=True):
        self.state = state
        self.use_decay = use_decay
        self.enabled = enabled

    def next_tau1(self, elapsed_seconds, train_loss, eta):
        state = self.state
        if not self.enabled:
            return state.tau1
        window = int(elapsed_seconds // state.t0_seconds)
        if window > state.window:
            state.window = window
            if self.use_decay:
                state.tau1 = update_tau1_with_decay(state, train_loss, eta)
            else:
                state.tau1 = update_tau1(state, train_loss)
            state.history.append((window, elapsed_seconds, state.tau1))
            logger.debug('window %d at %.1f s: loss=%.6g tau1=%d', window,
                         elapsed_seconds, train_loss, state.tau1)
        return state.tau1


def adaptive_run(config, t0_seconds, tau1_0=None, tau2=None, enabled=True,
                 use_decay=None):
    """Run the engine with tau1 adapted once per wall-clock window.

    Args:
        config (EngineConfig): Engine config; needs a latency model.
        t0_seconds (float): Window length T0.
        tau1_0 (int or None): Initial tau1, default schedule.tau1.
        tau2 (int, 'auto' or None): Fixed tau2. 'auto' derives it from the
            delays with `tau2_from_delays`; None keeps schedule.tau2.
        enabled (bool): When False the run equals the fixed-interval run.
        use_decay (bool or None): Apply the step-size correction; None
            enables it when the schedule decays the step size.

    Returns:
        RunTrace: Trace with an 'adaptive' metadata entry.
    """
    if config.latency is None:
        raise ConfigurationError('Adaptive intervals need a latency model.')
    schedule = config.schedule
    tau1_0 = schedule.tau1 if tau1_0 is None else tau1_0
    if tau2 == 'auto':
        tau2 = tau2_from_delays(
            config.latency.d_de_seconds, config.latency.d_ec_seconds,
            config.topology.n, config.topology.s, variance_factor(config.q1))
    elif tau2 is None:
        tau2 = schedule.tau2
    config = replace(config, schedule=replace(schedule, tau1=tau1_0,
                                              tau2=tau2))
    if use_decay is None:
        use_decay = schedule.eta_decay < 1 or bool(schedule.eta_milestones)
    engine = Engine(config)
    state = AdaptState(
        tau1_0=tau1_0, f0=engine.mean_client_loss(config.initial_point()),
        eta0=schedule.eta_at(0), t0_seconds=t0_seconds)
    controller = AdaptiveController(state, use_decay=use_decay,
                                    enabled=enabled)
    trace = engine.run(controller)
    trace.metadata['adaptive'] = {
        'tau1_0': tau1_0, 'tau2': tau2, 't0_seconds': t0_seconds,
        'f0': state.f0, 'enabled': enabled, 'use_decay': use_decay,
        'updates': [list(item) for item in state.history]}
    return trace
