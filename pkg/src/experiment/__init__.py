"""
Experiment package
"""

from .bench import MEDIAN_SWEEP, bench_compare, bench_median, bench_median_one, bench_sed
from .engine import ExperimentEngine, SecureSession, derive_seed, run_experiment
from .results import RoundMetrics, read_rounds, summary_frame, write_results

__all__ = [
    'MEDIAN_SWEEP',
    'ExperimentEngine',
    'RoundMetrics',
    'SecureSession',
    'bench_compare',
    'bench_median',
    'bench_median_one',
    'bench_sed',
    'derive_seed',
    'read_rounds',
    'run_experiment',
    'summary_frame',
    'write_results'
]
