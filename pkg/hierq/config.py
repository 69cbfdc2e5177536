"""Configuration settings for hierq package.

Experiments are single JSON documents validated by the pydantic models below.
Physical quantities carry their unit in the field name. Report templates are
rendered with Jinja2.
"""
import copy
import json
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from jinja2 import Environment, PackageLoader
from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
    model_validator

from hierq.definitions.constants import (
    ALGORITHMS, CHANNEL_DEFAULTS, EC_TO_DE_RATIO, LATENCY_PRESETS,
    LOSS_KINDS, QUANTIZER_KINDS, REPORT_STYLES, VALUE_BITS, WEIGHTINGS)
from hierq.definitions.error import ConfigurationError, InputError
from hierq.engine import EngineConfig, Schedule
from hierq.latency import ChannelParams, LatencyModel, data_bits_for
from hierq.model import LossModel, load_csv, synthetic_blobs
from hierq.quantizers import QuantizerSpec
from hierq.rng import RngStream
from hierq.topology import build_association, dirichlet_partition, \
    iid_partition


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ModelConfig(_Strict):
    """Loss model. Quadratic fields first, then logistic ones."""
    kind: Literal[LOSS_KINDS] = 'quadratic'
    dim: int = Field(10, ge=1)
    curvature: Optional[List[float]] = None
    centers: Optional[List[List[float]]] = None
    center_spread: float = Field(0.0, ge=0)
    noise_sigma: float = Field(0.0, ge=0)
    batch_size: int = Field(1, ge=1)
    dataset_csv: Optional[str] = None
    samples: int = Field(1000, ge=1)
    separation: float = 2.0
    ridge: float = Field(0.0, ge=0)
    dirichlet_alpha: Optional[float] = Field(None, gt=0)
    data_seed: int = Field(0, ge=0)
    x0: Optional[List[float]] = None
    x0_fill: Optional[float] = None


class TopologyConfig(_Strict):
    n: int = Field(20, ge=1)
    s: int = Field(4, ge=1)
    sizes: Optional[List[int]] = None


class ScheduleConfig(_Strict):
    tau1: int = Field(10, ge=1)
    tau2: int = Field(1, ge=1)
    rounds: Optional[int] = Field(100, ge=1)
    eta0: float = Field(0.01, gt=0)
    eta_decay: float = Field(1.0, gt=0, le=1)
    iters_per_epoch: Optional[int] = Field(None, ge=1)
    eta_milestones: List[Tuple[int, float]] = []
    wall_clock_budget_seconds: Optional[float] = Field(None, gt=0)


class QuantizerConfig(_Strict):
    kind: Literal[QUANTIZER_KINDS] = 'identity'
    r: Optional[int] = None
    levels: Optional[int] = None
    bits: Optional[int] = None


class ChannelConfig(_Strict):
    """Channel and CPU parameters; payload defaults to the full model."""
    payload_bits: Optional[float] = Field(None, ge=0)
    data_bits: Optional[float] = Field(None, ge=0)
    t_comp_seconds: float = Field(2.0, ge=0)
    bandwidth_hz: float = Field(CHANNEL_DEFAULTS['bandwidth_hz'], gt=0)
    channel_gain: float = Field(CHANNEL_DEFAULTS['channel_gain'], gt=0)
    power_watts: float = Field(CHANNEL_DEFAULTS['power_watts'], gt=0)
    noise_watts: float = Field(CHANNEL_DEFAULTS['noise_watts'], gt=0)
    cycles_per_bit: float = Field(CHANNEL_DEFAULTS['cycles_per_bit'], gt=0)
    cpu_hz: float = Field(CHANNEL_DEFAULTS['cpu_hz'], gt=0)
    ec_ratio: float = Field(EC_TO_DE_RATIO, gt=0)


class LatencyConfig(_Strict):
    """Latencies in seconds, from a preset, explicit values or a channel."""
    preset: Optional[Literal[tuple(sorted(LATENCY_PRESETS))]] = None
    d_comp_seconds: Optional[float] = Field(None, ge=0)
    d_de_seconds: Optional[float] = Field(None, ge=0)
    d_ec_seconds: Optional[float] = Field(None, ge=0)
    channel: Optional[ChannelConfig] = None
    scale_with_payload: bool = False

    @model_validator(mode='after')
    def _one_source(self):
        explicit = (self.d_comp_seconds, self.d_de_seconds, self.d_ec_seconds)
        if self.channel is not None and \
                (self.preset or any(v is not None for v in explicit)):
            raise ValueError('channel excludes preset and explicit seconds')
        if self.channel is None and self.preset is None and \
                any(v is None for v in explicit):
            raise ValueError('give a preset, a channel, or all three of '
                             'd_comp_seconds, d_de_seconds, d_ec_seconds')
        return self


class AdaptiveConfig(_Strict):
    enabled: bool = True
    tau1_initial: Optional[int] = Field(None, ge=1)
    window_seconds: float = Field(..., gt=0)
    tau2: Union[int, Literal['auto'], None] = None
    use_decay: Optional[bool] = None


class ExperimentConfig(_Strict):
    """A whole experiment: one engine setup, sweep axes and repetitions."""
    name: str = 'experiment'
    algorithm: Literal[ALGORITHMS] = 'hier-local-qsgd'
    weighting: Literal[WEIGHTINGS] = 'weighted'
    model: ModelConfig = Field(default_factory=ModelConfig)
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    q1: QuantizerConfig = Field(default_factory=QuantizerConfig)
    q2: QuantizerConfig = Field(default_factory=QuantizerConfig)
    latency: Optional[LatencyConfig] = None
    adaptive: Optional[AdaptiveConfig] = None
    sweep: Dict[str, List[Any]] = {}
    seed: int = Field(0, ge=0)
    repetitions: int = Field(1, ge=1)
    output_dir: str = 'results'
    workers: int = Field(1, ge=1)
    sweep_workers: int = Field(1, ge=1)
    diagnostics: bool = False


def _error_path(loc):
    return '.'.join(str(part) for part in loc)


def validate_config(data):
    """Validate a config mapping.

    Args:
        data (dict): Parsed JSON.

    Returns:
        ExperimentConfig

    Raises:
        ConfigurationError: Listing each invalid field by its dotted path.
    """
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as err:
        errors = [{'path': _error_path(e['loc']), 'message': e['msg']}
                  for e in err.errors()]
        msg = 'Invalid config: ' + '; '.join(
            '{}: {}'.format(e['path'] or '<root>', e['message'])
            for e in errors)
        raise ConfigurationError(msg, errors=errors)
    for path in config.sweep:
        check_path(config.model_dump(), path)
    return config


def load_config(path):
    """Read and validate a JSON experiment config."""
    try:
        with open(path) as file:
            data = json.load(file)
    except OSError as err:
        raise InputError('Cannot read config {}: {}'.format(path, err),
                         path=str(path))
    except json.JSONDecodeError as err:
        raise ConfigurationError('Config {} is not valid JSON: {}'
                                 .format(path, err), path=str(path))
    return validate_config(data)


def check_path(data, path):
    """Raise ConfigurationError unless the dotted path addresses a field."""
    node = data
    for part in path.split('.'):
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif node is None:
            return
        else:
            raise ConfigurationError('Unknown config path \'{}\'.'
                                     .format(path), path=path)


def apply_override(data, path, value):
    """Return a copy of data with the dotted path set to value.

    A mapping value is merged into the addressed sub-object instead of
    replacing it.

    Examples:
        >>> apply_override({'a': {'b': 1, 'c': 2}}, 'a', {'b': 5})
        {'a': {'b': 5, 'c': 2}}
        >>> apply_override({'a': {'b': 1}}, 'a.b', 3)
        {'a': {'b': 3}}
    """
    check_path(data, path)
    data = copy.deepcopy(data)
    parts = path.split('.')
    node = data
    for part in parts[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
    last = parts[-1]
    if isinstance(value, dict) and isinstance(node.get(last), dict):
        node[last] = {**node[last], **value}
    else:
        node[last] = value
    return data


def build_quantizer(qcfg, dim):
    return QuantizerSpec.from_dict(qcfg.model_dump(), dim)


def build_model(mcfg, n):
    """LossModel and data partition summary for n clients."""
    if mcfg.kind == 'quadratic':
        curvature = mcfg.curvature or [1.0] * mcfg.dim
        if mcfg.centers is not None:
            centers = np.array(mcfg.centers, dtype=np.float64)
            if centers.shape[0] == 1:
                centers = np.repeat(centers, n, axis=0)
        elif mcfg.center_spread > 0:
            gen = RngStream(mcfg.data_seed, ('centers',)).generator()
            centers = mcfg.center_spread * gen.standard_normal((n, mcfg.dim))
        else:
            centers = np.zeros((n, mcfg.dim))
        model = LossModel.quadratic(curvature, centers,
                                    noise_sigma=mcfg.noise_sigma,
                                    batch_size=mcfg.batch_size)
        return model, None
    if mcfg.dataset_csv:
        features, labels = load_csv(mcfg.dataset_csv)
    else:
        features, labels = synthetic_blobs(mcfg.samples, mcfg.dim,
                                           mcfg.data_seed, mcfg.separation)
    stream = RngStream(mcfg.data_seed, ('partition',))
    if mcfg.dirichlet_alpha is None:
        partition = iid_partition(len(labels), n, stream)
    else:
        partition = dirichlet_partition(labels, n, mcfg.dirichlet_alpha,
                                        stream)
    model = LossModel.from_partition(features, labels, partition,
                                     ridge=mcfg.ridge,
                                     batch_size=mcfg.batch_size)
    return model, partition


def initial_point(mcfg, dim):
    if mcfg.x0 is not None:
        return np.array(mcfg.x0, dtype=np.float64)
    fill = mcfg.x0_fill
    if fill is None:
        fill = 1.0 if mcfg.kind == 'quadratic' else 0.0
    return np.full(dim, float(fill))


def build_latency(lcfg, q1, q2, dim):
    """LatencyModel for the config, or None without a latency section."""
    if lcfg is None:
        return None
    if lcfg.channel is not None:
        ch = lcfg.channel
        data_bits = ch.data_bits if ch.data_bits is not None else \
            data_bits_for(ch.t_comp_seconds, ch.cycles_per_bit, ch.cpu_hz)
        payload = ch.payload_bits if ch.payload_bits is not None \
            else dim * VALUE_BITS
        params = ChannelParams(
            payload_bits=payload, data_bits=data_bits,
            bandwidth_hz=ch.bandwidth_hz, channel_gain=ch.channel_gain,
            power_watts=ch.power_watts, noise_watts=ch.noise_watts,
            cycles_per_bit=ch.cycles_per_bit, cpu_hz=ch.cpu_hz)
        return LatencyModel.from_channel(params, q1, q2, ch.ec_ratio)
    values = dict(LATENCY_PRESETS[lcfg.preset]) if lcfg.preset else {}
    for name in ('d_comp_seconds', 'd_de_seconds', 'd_ec_seconds'):
        if getattr(lcfg, name) is not None:
            values[name] = getattr(lcfg, name)
    model = LatencyModel(**values)
    if lcfg.scale_with_payload:
        model = model.scaled_for(q1, q2, dim * VALUE_BITS)
    return model


def build_engine_config(config, seed):
    """EngineConfig of one run and the data partition, if any.

    Args:
        config (ExperimentConfig): Validated config without sweep.
        seed (int): Run seed.

    Returns:
        tuple: (EngineConfig, DataPartition or None)
    """
    topo = config.topology
    topology = build_association(topo.n, topo.s, topo.sizes)
    model, partition = build_model(config.model, topo.n)
    q1 = build_quantizer(config.q1, model.dim)
    q2 = build_quantizer(config.q2, model.dim)
    sched = config.schedule
    schedule = Schedule(
        tau1=sched.tau1, tau2=sched.tau2, rounds=sched.rounds,
        eta0=sched.eta0, eta_decay=sched.eta_decay,
        iters_per_epoch=sched.iters_per_epoch,
        eta_milestones=tuple(sched.eta_milestones),
        wall_clock_budget_seconds=sched.wall_clock_budget_seconds)
    engine_config = EngineConfig(
        topology=topology, model=model, schedule=schedule, q1=q1, q2=q2,
        weighting=config.weighting, seed=seed,
        x0=initial_point(config.model, model.dim),
        latency=build_latency(config.latency, q1, q2, model.dim),
        workers=config.workers, diagnostics=config.diagnostics,
        algorithm=config.algorithm)
    return engine_config, partition


def _num(value, digits=6):
    """Compact number formatting for reports."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    try:
        return '{:.{}g}'.format(float(value), digits)
    except (TypeError, ValueError):
        return str(value)


def get_template_env(style='default'):
    """Get Jinja2 template environment.

        Args:
            style (string): The report style chosen.

        Returns:
            jinja2.Environment: The environment of chosen style.
    """
    if style not in REPORT_STYLES:
        raise ConfigurationError('Unknown report style \'{}\'.'.format(style))
    env = Environment(loader=PackageLoader('hierq', 'templates/' + style),
                      trim_blocks=True,
                      lstrip_blocks=True)
    env.filters['num'] = _num
    return env
