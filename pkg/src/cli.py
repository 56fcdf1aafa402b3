"""
Command-line front end.

    python -m src run --clients 10 --malicious 0.4 --attack ipm --rounds 20 --out results
    python -m src bench-compare --pairs 1 1000 --bits 32
    python -m src bench-median --clients 20 40 60 80 100 --key-bits 512
    python -m src bench-sed --clients 10 --parameters 16384 --window 64
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import pandas as pd

from .config import ATTACKS, SAMPLERS, ExperimentConfig, load_settings
from .exceptions import ConfigError, FlurpError
from .experiment.bench import MEDIAN_SWEEP, bench_compare, bench_median, bench_sed
from .experiment.engine import ExperimentEngine
from .experiment.results import write_results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='flurp', description='Two-server Byzantine-robust secure aggregation')
    parser.add_argument('--log-level', default=None, help='Overrides FLURP_LOG_LEVEL')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run a federated-learning experiment')
    run.add_argument('--config', help='JSON file with ExperimentConfig fields')
    run.add_argument('--clients', type=int)
    run.add_argument('--malicious', type=float, help='Fraction of malicious clients')
    run.add_argument('--attack', choices=ATTACKS)
    run.add_argument('--ipm-alpha', type=float)
    run.add_argument('--noise-mean', type=float)
    run.add_argument('--noise-std', type=float)
    run.add_argument('--window', type=int)
    run.add_argument('--sampler', choices=SAMPLERS)
    run.add_argument('--bits', type=int, choices=(32, 64))
    run.add_argument('--fixed-bits', type=int)
    run.add_argument('--rounds', type=int)
    run.add_argument('--epochs', type=int)
    run.add_argument('--seed', type=int)
    run.add_argument('--mode', choices=('secure', 'oracle'))
    run.add_argument('--defense', choices=('flurp', 'fedavg'))
    run.add_argument('--transport', choices=('inproc', 'tcp'))
    run.add_argument('--listen', help='host:port to listen on as server 0')
    run.add_argument('--connect', help='host:port of server 0 to connect to as server 1')
    run.add_argument('--key-bits', type=int, choices=(512, 1024))
    run.add_argument('--partition', choices=('iid', 'dirichlet'))
    run.add_argument('--dirichlet-alpha', type=float)
    run.add_argument('--arch', choices=('logreg', 'mlp'))
    run.add_argument('--strict-overflow', action='store_true', default=None)
    run.add_argument('--out', default='results', help='Output directory')
    run.add_argument('--prefix', default='run', help='Output file prefix')

    compare = sub.add_parser('bench-compare', help='Batched comparison cost')
    compare.add_argument('--pairs', type=int, nargs='+', default=[1, 10, 1000])
    compare.add_argument('--bits', type=int, choices=(32, 64), default=32)
    compare.add_argument('--chunk-bits', type=int, choices=(2, 4, 8), default=4)
    compare.add_argument('--seed', type=int, default=0)
    compare.add_argument('--out', help='CSV path (stdout when omitted)')

    median = sub.add_parser('bench-median', help='Shuffle and median selection cost')
    median.add_argument('--clients', type=int, nargs='+', default=list(MEDIAN_SWEEP))
    median.add_argument('--key-bits', type=int, choices=(512, 1024), default=1024)
    median.add_argument('--chunk-bits', type=int, choices=(2, 4, 8), default=4)
    median.add_argument('--seed', type=int, default=0)
    median.add_argument('--out', help='CSV path (stdout when omitted)')

    sed = sub.add_parser('bench-sed', help='Shared SED matrix cost per sampler')
    sed.add_argument('--clients', type=int, default=10)
    sed.add_argument('--parameters', type=int, default=1 << 14)
    sed.add_argument('--window', type=int, default=1 << 6)
    sed.add_argument('--samplers', nargs='+', choices=SAMPLERS, default=['linf', 'row'])
    sed.add_argument('--bits', type=int, choices=(32, 64), help='ring width (default: chosen from each LUR length)')
    sed.add_argument('--seed', type=int, default=0)
    sed.add_argument('--out', help='CSV path (stdout when omitted)')
    return parser


def _emit(frame: pd.DataFrame, out: Optional[str]) -> None:
    if out:
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(out, index=False)
        logger.info(f"Wrote {len(frame)} rows to {out}")
    else:
        frame.to_csv(sys.stdout, index=False)


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the JSON file, then explicit flags."""
    base = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    return base.with_overrides(
        clients=args.clients,
        malicious=args.malicious,
        attack=args.attack,
        ipm_alpha=args.ipm_alpha,
        noise_mean=args.noise_mean,
        noise_std=args.noise_std,
        window=args.window,
        sampler=args.sampler,
        bits=args.bits,
        fixed_bits=args.fixed_bits,
        rounds=args.rounds,
        epochs=args.epochs,
        seed=args.seed,
        mode=args.mode,
        defense=args.defense,
        transport=args.transport,
        listen=args.listen,
        connect=args.connect,
        key_bits=args.key_bits,
        partition=args.partition,
        dirichlet_alpha=args.dirichlet_alpha,
        arch=args.arch,
        strict_overflow=args.strict_overflow,
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = experiment_config(args)
    metrics = ExperimentEngine(config).run()
    prefix = args.prefix
    if config.transport == 'tcp':
        prefix = f'{prefix}_party{config.party_id}'
    write_results(metrics, args.out, prefix)
    return EXIT_OK


def cmd_bench_compare(args: argparse.Namespace) -> int:
    rows = [bench_compare(n, args.bits, args.chunk_bits, args.seed) for n in args.pairs]
    _emit(pd.DataFrame(rows), args.out)
    return EXIT_OK


def cmd_bench_median(args: argparse.Namespace) -> int:
    _emit(bench_median(args.clients, args.key_bits, args.seed, args.chunk_bits), args.out)
    return EXIT_OK


def cmd_bench_sed(args: argparse.Namespace) -> int:
    frame = bench_sed(args.clients, args.parameters, args.window, args.samplers, args.bits, args.seed)
    _emit(frame, args.out)
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'bench-compare': cmd_bench_compare,
    'bench-median': cmd_bench_median,
    'bench-sed': cmd_bench_sed,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch.

    Returns:
        0 on success, 2 on configuration errors, 1 on any other failure
    """
    args = build_parser().parse_args(argv)
    settings = load_settings()
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (FlurpError, ConnectionError, TimeoutError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
