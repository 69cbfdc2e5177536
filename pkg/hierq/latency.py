"""Wall-clock model of computation and upload latency.

A cloud round costs tau2 * (tau1 * D_comp + D_de) + D_ec seconds: tau1 local
iterations and one client-to-edge upload per edge round, then one
edge-to-cloud upload. Downlink is free.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from hierq.definitions.constants import (
    CHANNEL_DEFAULTS, EC_TO_DE_RATIO, LATENCY_PRESETS, NORM_BITS, VALUE_BITS)
from hierq.definitions.error import ConfigurationError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyModel:
    """Per-event latencies in seconds.

    Attributes:
        d_comp_seconds (float): One local SGD iteration.
        d_de_seconds (float): One client-to-edge upload.
        d_ec_seconds (float): One edge-to-cloud upload.
    """
    d_comp_seconds: float
    d_de_seconds: float
    d_ec_seconds: float

    def __post_init__(self):
        for name in ('d_comp_seconds', 'd_de_seconds', 'd_ec_seconds'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                msg = 'Latency {} must be finite and non-negative (got {}).'\
                    .format(name, value)
                raise ConfigurationError(msg, field=name, value=value)

    @classmethod
    def preset(cls, name):
        """Named preset from LATENCY_PRESETS, e.g. 'cifar10'."""
        try:
            values = LATENCY_PRESETS[name]
        except KeyError:
            msg = 'Unknown latency preset \'{}\'; expected one of {}.'\
                .format(name, ', '.join(sorted(LATENCY_PRESETS)))
            raise ConfigurationError(msg, preset=name)
        return cls(**values)

    @classmethod
    def from_channel(cls, channel, q1_spec=None, q2_spec=None,
                     ec_ratio=EC_TO_DE_RATIO):
        """Derive latencies from channel and CPU parameters.

        The client upload carries payload(Q1) bits and the edge upload
        payload(Q2) bits over a link `ec_ratio` times slower.

        Args:
            channel (ChannelParams): Channel, CPU and payload parameters.
                Its payload_bits is the full-precision model size.
            q1_spec (QuantizerSpec): Client-to-edge quantizer, or None for
                full precision.
            q2_spec (QuantizerSpec): Edge-to-cloud quantizer, or None.
            ec_ratio (float): D_ec / D_de at equal payload.

        Returns:
            LatencyModel
        """
        full_bits = channel.payload_bits
        de_bits = full_bits if q1_spec is None \
            else quantized_payload_bits(q1_spec, full_bits)
        ec_bits = full_bits if q2_spec is None \
            else quantized_payload_bits(q2_spec, full_bits)
        model = cls(
            d_comp_seconds=comp_latency(channel),
            d_de_seconds=comm_latency(replace(channel, payload_bits=de_bits)),
            d_ec_seconds=ec_ratio * comm_latency(
                replace(channel, payload_bits=ec_bits)))
        logger.debug('Channel latencies: %s', model)
        return model

    def scaled_for(self, q1_spec, q2_spec, full_bits):
        """Scale upload latencies by each quantizer's payload fraction.

        Args:
            q1_spec (QuantizerSpec): Client-to-edge quantizer.
            q2_spec (QuantizerSpec): Edge-to-cloud quantizer.
            full_bits (int): Full-precision payload the latencies refer to.

        Returns:
            LatencyModel
        """
        return LatencyModel(
            self.d_comp_seconds,
            self.d_de_seconds * quantized_payload_bits(q1_spec, full_bits)
            / full_bits,
            self.d_ec_seconds * quantized_payload_bits(q2_spec, full_bits)
            / full_bits)

    def round_time(self, tau1, tau2):
        """Seconds for one cloud round.

        >>> LatencyModel(2.0, 33.0, 330.0).round_time(50, 5)
        995.0
        """
        return tau1 * tau2 * self.d_comp_seconds + tau2 * self.d_de_seconds \
            + self.d_ec_seconds

    def fedavg_round_time(self, tau):
        """Seconds for one FedAvg round: clients upload over the long link."""
        return tau * self.d_comp_seconds + self.d_ec_seconds

    def to_dict(self):
        return {
            'd_comp_seconds': self.d_comp_seconds,
            'd_de_seconds': self.d_de_seconds,
            'd_ec_seconds': self.d_ec_seconds
        }


@dataclass(frozen=True)
class ChannelParams:
    """Upload channel and local CPU description.

    Attributes:
        payload_bits (float): W, bits per upload.
        bandwidth_hz (float): B.
        channel_gain (float): h, dimensionless.
        power_watts (float): p, transmit power.
        noise_watts (float): N0, noise power.
        cycles_per_bit (float): c.
        data_bits (float): D, bits processed per local iteration.
        cpu_hz (float): f.
    """
    payload_bits: float
    data_bits: float
    bandwidth_hz: float = CHANNEL_DEFAULTS['bandwidth_hz']
    channel_gain: float = CHANNEL_DEFAULTS['channel_gain']
    power_watts: float = CHANNEL_DEFAULTS['power_watts']
    noise_watts: float = CHANNEL_DEFAULTS['noise_watts']
    cycles_per_bit: float = CHANNEL_DEFAULTS['cycles_per_bit']
    cpu_hz: float = CHANNEL_DEFAULTS['cpu_hz']

    def __post_init__(self):
        for name in ('bandwidth_hz', 'channel_gain', 'power_watts',
                     'noise_watts', 'cycles_per_bit', 'cpu_hz'):
            if not getattr(self, name) > 0:
                msg = 'Channel parameter {} must be positive.'.format(name)
                raise ConfigurationError(msg, field=name,
                                         value=getattr(self, name))
        for name in ('payload_bits', 'data_bits'):
            if not getattr(self, name) >= 0:
                msg = 'Channel parameter {} must be non-negative.'\
                    .format(name)
                raise ConfigurationError(msg, field=name,
                                         value=getattr(self, name))

    @property
    def rate_bps(self):
        """Shannon rate B log2(1 + hp/N0) in bits per second."""
        snr = self.channel_gain * self.power_watts / self.noise_watts
        return self.bandwidth_hz * np.log2(1.0 + snr)


def wall_clock(rounds, tau1, tau2, model):
    """Seconds spent by `rounds` cloud rounds at fixed intervals.

    Args:
        rounds (int): K.
        tau1 (int): Client-edge interval.
        tau2 (int): Edge-cloud interval.
        model (LatencyModel): Latencies.

    Returns:
        float: K * (tau1 tau2 D_comp + tau2 D_de + D_ec).

    Examples:
        >>> wall_clock(1, 50, 5, LatencyModel(2.0, 33.0, 330.0))
        995.0
        >>> wall_clock(3, 2, 2, LatencyModel(1.0, 0.0, 0.0))
        12.0
    """
    return rounds * model.round_time(tau1, tau2)


def comm_latency(channel):
    """Upload time W / (B log2(1 + hp/N0)).

    >>> ch = ChannelParams(payload_bits=2e6, data_bits=0, channel_gain=1.0,
    ...                    power_watts=1.0, noise_watts=1.0)
    >>> comm_latency(ch)
    2.0
    """
    return channel.payload_bits / channel.rate_bps


def comp_latency(channel):
    """Local iteration time c D / f.

    >>> comp_latency(ChannelParams(payload_bits=0, data_bits=1e8))
    2.0
    """
    return channel.cycles_per_bit * channel.data_bits / channel.cpu_hz


def data_bits_for(t_comp_seconds,
                  cycles_per_bit=CHANNEL_DEFAULTS['cycles_per_bit'],
                  cpu_hz=CHANNEL_DEFAULTS['cpu_hz']):
    """Back out D, the bits per local iteration, from a measured T_comp.

    >>> data_bits_for(2.0)
    100000000.0
    """
    if t_comp_seconds < 0:
        raise InputError('Computation time must be non-negative.',
                         t_comp_seconds=t_comp_seconds)
    return float(t_comp_seconds) * cpu_hz / cycles_per_bit


def quantized_payload_bits(spec, full_bits):
    """Serialized size of one quantized upload.

    Identity sends the full-precision model. Sparsification sends r
    (index, value) pairs. Stochastic rounding sends a sign bit and a level code
    per coordinate plus the norm.

    Args:
        spec (QuantizerSpec): Compressor.
        full_bits (int): Full-precision size, used by the identity.

    Returns:
        int: Bits per upload.
    """
    if spec.kind == 'identity':
        return int(full_bits)
    if spec.kind == 'random-sparsification':
        index_bits = max(1, int(np.ceil(np.log2(spec.dim))))
        return spec.r * (index_bits + VALUE_BITS)
    level_bits = int(np.ceil(np.log2(spec.levels + 1)))
    return spec.dim * (1 + level_bits) + NORM_BITS
