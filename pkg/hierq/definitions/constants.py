"""A list of reusable constants for the package.

QUANTIZER_KINDS (tuple): Supported unbiased random compressors.
LOSS_KINDS (tuple): Supported loss models.
WEIGHTINGS (tuple): Cloud-side coefficients for edge updates; 'weighted' uses
    m^l/n, 'uniform' uses 1/s.
TRACE_COLUMNS (tuple): Column order of run trace CSV files.
SUMMARY_COLUMNS (tuple): Column order of sweep summary CSV files.
BENCH_COLUMNS (tuple): Column order of quantizer certification reports.
COMPARE_COLUMNS (tuple): Column order of run comparison tables.
LATENCY_PRESETS (dict): Per-iteration computation and full-precision upload
    latencies reported for the two image benchmarks, in seconds.
"""
QUANTIZER_KINDS = ('identity', 'random-sparsification', 'stochastic-rounding')
LOSS_KINDS = ('quadratic', 'logistic')
WEIGHTINGS = ('weighted', 'uniform')
ALGORITHMS = ('hier-local-qsgd', 'fedavg')

# Quantizer certification defaults.
MIN_CERTIFY_DRAWS = 10 ** 4
MEAN_SIGMAS = 4.0
VARIANCE_SLACK = 0.05

# Payload accounting.
VALUE_BITS = 32
NORM_BITS = 32

# Engine guards.
DIVERGENCE_NORM = 1e12
WEIGHT_SUM_TOLERANCE = 1e-12

# Logistic noise estimate at the initial point.
SIGMA2_ESTIMATE_DRAWS = 2000

TRACE_COLUMNS = ('k', 't_total', 'wall_clock_s', 'loss', 'grad_norm_sq',
                 'tau1', 'tau2', 'eta', 'uplink_bits', 'train_loss',
                 'q2_error_sq')
SUMMARY_COLUMNS = ('point', 'repetition', 'seed', 'label', 'rounds',
                   'final_loss', 'final_grad_norm_sq', 'wall_clock_s',
                   'uplink_bits', 'diverged', 'trace_file')
BENCH_COLUMNS = ('kind', 'params', 'probe_id', 'mean_dev', 'var_ratio',
                 'q_bound', 'pass')
COMPARE_COLUMNS = ('group', 'axis', 'checkpoint', 'mean', 'stderr', 'runs',
                   'interpolated')
DIVERGED_MARKER = 'NaN'

EC_TO_DE_RATIO = 10.0
LATENCY_PRESETS = {
    'cifar10': {
        'd_comp_seconds': 2.0,
        'd_de_seconds': 33.0,
        'd_ec_seconds': 330.0
    },
    'cifar100': {
        'd_comp_seconds': 7.2,
        'd_de_seconds': 63.3,
        'd_ec_seconds': 633.0
    },
}

# Wireless uplink and client CPU used for the benchmark latencies.
CHANNEL_DEFAULTS = {
    'bandwidth_hz': 1e6,
    'channel_gain': 1e-8,
    'power_watts': 0.5,
    'noise_watts': 1e-10,
    'cycles_per_bit': 20.0,
    'cpu_hz': 1e9,
}
# CNN whose upload sets the cifar10 latency preset.
CIFAR10_CNN_PARAMETERS = 5852170

SUBCOMMANDS = ('run', 'sweep', 'bound', 'plan', 'quantize-bench', 'compare')
REPORT_STYLES = ('default',)
