#!/usr/bin/env python3
"""
Leverage Bidder - Main Entry Point

Experiment harness for leveraged-traffic bid optimization.
"""

import sys
import os
import argparse
import logging

# Add src to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import load_config, ConfigError
from src.dynamics import fixed_points, fixed_point_report_rows, phenomenon_table, sample_curves, simulate_campaign
from src.evaluation import EvaluationError, per_product_report, traffic_sweep
from src.episode_log import EpisodeLog
from src.exposure_fit import (
    FitError, collect_exposure_samples, fit_exposure, load_fits, load_samples_csv, save_fits, write_samples_csv,
)
from src.market import MarketEnv
from src.policies import fixed_policy, load_policy
from src.reporting import ReportingError, compare_algorithms, write_summary_table, write_table
from src.runner import ExperimentRunner

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def setup_logging(level: str = 'INFO') -> None:
    """
    Configure logging for the application.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR)
    """
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=log_format,
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )


def parse_args(argv=None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description='Leverage Bidder - Leveraged-traffic bid optimization experiments',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Train every configured algorithm on every seed
  python -m src.main run config/reference.yaml --jobs 4

  # Converged-performance table of an experiment
  python -m src.main compare runs

  # Business vs organic traffic of fixed ratios and a trained policy
  python -m src.main sweep config/reference.yaml --checkpoint runs/htlb_ddpg/seed_0/checkpoint

  # Relative organic increment per target product
  python -m src.main report runs/htlb_ddpg/seed_0/checkpoint

  # Fixed points and curve samples of every target product
  python -m src.main dynamics config/reference.yaml --out analysis

  # Log manual-bidding windows and exposure samples
  python -m src.main collect config/reference.yaml --episodes 20 --out logs

  # Fit exposure curves from logged samples
  python -m src.main fit logs/samples.csv --out fits.json
        """
    )

    parser.add_argument(
        '--log-level', '-l',
        type=str,
        default=os.environ.get('LEVERAGE_LOG_LEVEL', 'INFO').upper(),
        choices=LOG_LEVELS,
        help='Logging level (default: LEVERAGE_LOG_LEVEL env var or INFO)'
    )

    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run an experiment')
    run.add_argument('config', type=str, nargs='?', default=None,
                     help='Path to configuration file (default: uses LEVERAGE_CONFIG env var)')
    run.add_argument('--out', '-o', type=str, default=None, help='Output directory')
    run.add_argument('--jobs', '-j', type=int, default=None, help='Parallel jobs')
    run.add_argument('--seed-offset', type=int, default=0, help='Added to every training seed')

    compare = subparsers.add_parser('compare', help='Summarize converged performance')
    compare.add_argument('directory', type=str, help='Experiment output directory')

    sweep = subparsers.add_parser('sweep', help='Business-traffic sweep')
    sweep.add_argument('config', type=str, help='Path to configuration file')
    sweep.add_argument('--checkpoint', type=str, required=True, help='Trained policy checkpoint')
    sweep.add_argument('--out', '-o', type=str, default=None, help='Output directory')
    sweep.add_argument('--seed-offset', type=int, default=0, help='Added to every evaluation seed')

    report = subparsers.add_parser('report', help='Per-product organic increments')
    report.add_argument('checkpoint', type=str, help='Trained policy checkpoint')
    report.add_argument('--config', '-c', type=str, default=None, help='Path to configuration file')
    report.add_argument('--out', '-o', type=str, default=None, help='Output directory')
    report.add_argument('--seed-offset', type=int, default=0, help='Added to every evaluation seed')

    dynamics = subparsers.add_parser('dynamics', help='Fixed points and campaign phenomena')
    dynamics.add_argument('config', type=str, help='Path to configuration file')
    dynamics.add_argument('--out', '-o', type=str, default='.', help='Output directory')
    dynamics.add_argument('--business-pv', type=float, default=500.0,
                          help='Advertising impressions per window during campaigns')
    dynamics.add_argument('--stage', type=int, default=7, help='Windows per campaign stage')

    collect = subparsers.add_parser('collect', help='Log windows and exposure samples of a policy')
    collect.add_argument('config', type=str, help='Path to configuration file')
    collect.add_argument('--checkpoint', type=str, default=None,
                         help='Policy checkpoint (default: constant --ratio)')
    collect.add_argument('--ratio', type=float, default=0.0, help='Constant bid adjust ratio')
    collect.add_argument('--episodes', type=int, default=20, help='Episodes to log')
    collect.add_argument('--seed', type=int, default=0, help='Seed of the first episode')
    collect.add_argument('--out', '-o', type=str, default='.', help='Output directory')

    fit = subparsers.add_parser('fit', help='Fit exposure curves from samples')
    fit.add_argument('samples', type=str, help='CSV with product_id, window, p, z_next')
    fit.add_argument('--out', '-o', type=str, default='fits.json', help='Output JSON path')
    fit.add_argument('--bandwidth', type=str, default='cv',
                     help="'cv' (default), 'silverman' or an explicit value")

    return parser.parse_args(argv)


def _eval_seeds(config: dict, offset: int) -> list[int]:
    return [int(s) + offset for s in config['experiment']['eval_seeds']]


def _fits(config: dict, logger):
    path = config['experiment'].get('exposure_fits')
    if not path:
        return None
    logger.info(f"Evaluating on replay environment from exposure fits {path}")
    return load_fits(path)


def cmd_run(args, logger) -> int:
    config = load_config(args.config)
    runner = ExperimentRunner(
        config=config,
        config_path=args.config or os.environ.get('LEVERAGE_CONFIG', 'config/reference.yaml'),
        output_dir=args.out,
        jobs=args.jobs,
        seed_offset=args.seed_offset
    )
    output_dir = runner.run()
    report = runner.report

    print("\n" + "="*50)
    print("EXPERIMENT COMPLETED")
    print("="*50)
    print(f"Output: {output_dir}")
    print(f"Runs processed: {report['runs_processed']}")
    print(f"Successful: {report['runs_successful']}")
    print(f"Diverged: {report['runs_diverged']}")
    print(f"Failed: {report['runs_failed']}")
    print("="*50 + "\n")

    return 0 if report['runs_failed'] == 0 else 1


def cmd_compare(args, logger) -> int:
    table, report = compare_algorithms(args.directory)
    write_summary_table(args.directory, table, report)

    print("\n" + "="*50)
    print("CONVERGED PERFORMANCE")
    print("="*50)
    for row in table.rows:
        print(f"{row.algorithm:<14} {row.converged_mean:>14.2f} +/- {row.converged_std:.2f} ({row.seeds} seeds)")
    if table.absent:
        print(f"Absent: {', '.join(table.absent)}")
    print(f"Ordering {' >= '.join(report['expected_order'])}: held in {report['held']} of {report['checked']} seeds")
    print("="*50 + "\n")
    return 0


def cmd_sweep(args, logger) -> int:
    config = load_config(args.config)
    rows = traffic_sweep(
        config['environment'], args.checkpoint, _eval_seeds(config, args.seed_offset),
        ratios=config['experiment']['sweep_ratios'],
        fits=_fits(config, logger),
    )
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    fieldnames = ['policy', 'ratio', 'business_increment', 'organic_increment',
                  'business_increment_std', 'organic_increment_std']
    csv_path, _ = write_table(
        os.path.join(out, 'traffic_sweep.csv'),
        [vars(row) for row in rows],
        fieldnames,
        {'checkpoint': os.path.abspath(args.checkpoint), 'seeds': _eval_seeds(config, args.seed_offset)},
    )
    for row in rows:
        print(f"{row.policy:<12} business {row.business_increment:>12.1f}  organic {row.organic_increment:>12.1f}")
    logger.info(f"Sweep written to {csv_path}")
    return 0


def cmd_report(args, logger) -> int:
    config = load_config(args.config)
    seeds = _eval_seeds(config, args.seed_offset)
    rows, summary = per_product_report(
        args.checkpoint, config['environment'], seeds, fits=_fits(config, logger)
    )
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    csv_path, _ = write_table(
        os.path.join(out, 'product_report.csv'),
        rows,
        ['product', 'organic_policy', 'organic_baseline', 'relative_increment'],
        {'checkpoint': os.path.abspath(args.checkpoint), 'seeds': seeds, 'summary': summary},
    )
    print(f"Products: {summary['products']}, above 0%: {summary['above_0pct']}, "
          f"above 100%: {summary['above_100pct']}")
    logger.info(f"Report written to {csv_path}")
    return 0


def cmd_dynamics(args, logger) -> int:
    config = load_config(args.config)
    env_config = config['environment']
    env = MarketEnv(env_config)

    point_rows, curve_rows, campaigns = [], [], []
    for product in env.targets:
        T, U = product.traffic_win, product.exposure_effect
        search_max = 2.0 * T.saturation
        point_rows.extend(fixed_point_report_rows(product.id, fixed_points(T, U, search_max)))
        curve_rows.extend({'product': product.id, **row} for row in sample_curves(T, U, search_max))
        campaigns.append(simulate_campaign(
            T, U, float(T(product.initial_score)), args.stage, args.stage, args.stage,
            args.business_pv, product.business_quality,
            float(env_config['leverage_lambda']), float(env_config['leverage_mu']),
        ))

    write_table(os.path.join(args.out, 'fixed_points.csv'), point_rows,
                ['product', 'p', 'stability', 'slope', 'cold_start', 'stable_point'])
    write_table(os.path.join(args.out, 'curves.csv'), curve_rows, ['product', 'p', 'z', 'next_p'])
    table = phenomenon_table(campaigns)
    rows = [
        {'comparison': name, 'bucket': bucket, 'count': count}
        for name, buckets in table['counts'].items()
        for bucket, count in buckets.items()
    ]
    write_table(os.path.join(args.out, 'phenomena.csv'), rows, ['comparison', 'bucket', 'count'], {
        'stable_products': table['stable_products'],
        'total_products': table['total_products'],
        'business_pv': args.business_pv,
    })
    print(f"Fixed points: {len(point_rows)} across {env.n_targets} products; "
          f"stable products: {table['stable_products']}/{table['total_products']}")
    return 0


def cmd_collect(args, logger) -> int:
    if args.episodes < 1:
        logger.error(f"Episodes must be positive, got {args.episodes}")
        return 1
    config = load_config(args.config)
    env = MarketEnv(config['environment'])
    if args.checkpoint:
        policy = load_policy(args.checkpoint)
    else:
        policy = fixed_policy(args.ratio, env.range)

    log = EpisodeLog(args.out)
    seeds = [args.seed + i for i in range(args.episodes)]
    samples = collect_exposure_samples(env, policy, seeds, log)
    csv_path, _ = log.generate_all()
    samples_path = write_samples_csv(samples, os.path.join(args.out, 'samples.csv'))

    stats = log.get_stats()
    print(f"Logged {stats['episodes']} episodes ({stats['total_rows']} rows) -> {csv_path}")
    print(f"Exposure samples for {len(samples)} products -> {samples_path}")
    return 0


def cmd_fit(args, logger) -> int:
    bandwidth = args.bandwidth
    if bandwidth not in ('silverman', 'cv'):
        try:
            bandwidth = float(bandwidth)
        except ValueError:
            logger.error(f"Invalid bandwidth: {args.bandwidth}")
            return 1
    samples = load_samples_csv(args.samples)
    fits = {pid: fit_exposure(product_samples, bandwidth) for pid, product_samples in samples.items()}
    path = save_fits(fits, args.out)
    print(f"Fitted {len(fits)} products -> {path}")
    return 0


COMMANDS = {
    'run': cmd_run,
    'compare': cmd_compare,
    'sweep': cmd_sweep,
    'report': cmd_report,
    'dynamics': cmd_dynamics,
    'collect': cmd_collect,
    'fit': cmd_fit,
}


def main(argv=None) -> int:
    """
    Main entry point.

    Returns:
        Exit code (0 for success, 1 for error)
    """
    args = parse_args(argv)

    # Setup logging
    setup_logging(args.log_level)
    logger = logging.getLogger(__name__)

    logger.info(f"Leverage Bidder starting ({args.command})...")

    try:
        return COMMANDS[args.command](args, logger)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 1
    except (EvaluationError, ReportingError, FitError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
