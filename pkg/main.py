#!/usr/bin/env python3
"""
Quantum trajectory ensembles for coupled nonlinear oscillators

Main CLI script: runs QSD / quantum-jump ensembles (or the master-equation
oracle) over parameter sweeps and records the mean entanglement entropy.

Usage:
    python main.py run configs/squid_capacitance_sweep.json       # Run all ensembles
    python main.py run configs/duffing_beta_sweep.json --resume   # Resume from checkpoint
    python main.py validate configs/squid_capacitance_sweep.json  # Check config, print derived params
    python main.py plot output/squid_capacitance_sweep/summary.csv --render
    python main.py basins configs/duffing_beta_sweep.json         # Locate entrained / chaotic branches
"""

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from dotenv import load_dotenv
load_dotenv()

from app.dynamics.classical import ClassicalState, integrate_duffing, integrate_rsj_pair
from app.dynamics.regime import MIN_ANALYSIS_PERIODS, TRANSIENT_PERIODS, pair_grid, scan_basins
from app.ensemble.results import EmptySummaryError, emit_plot, read_summary, write_basins_csv
from app.ensemble.runner import EnsembleRunner, ResumeMismatchError, describe_point, squid_physical
from app.models import DuffingParams
from app.physics.circuit import flux_to_position, position_scale, squid_dimensionless
from app.utils.logger import attach_run_log, log_versions, setup_run_logger
from app.utils.run_config import DEFAULT_OUTPUT_DIR, ConfigError, load_config

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

CLASSICAL_STEPS_PER_PERIOD = 400


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description='Quantum trajectory ensembles of coupled SQUID rings and Duffing oscillators',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s run configs/squid_capacitance_sweep.json             Run a capacitance sweep
  %(prog)s run configs/duffing_beta_sweep.json --workers 8      Run in 8 processes
  %(prog)s run configs/duffing_beta_sweep.json --resume         Resume from last checkpoint
  %(prog)s validate configs/single_mode_oracle.json             Check a config
  %(prog)s plot output/duffing_beta_sweep/summary.csv --render  Emit plot data, script and PNG
  %(prog)s basins configs/duffing_beta_sweep.json               Scan classical initial conditions

Environment Variables:
  QTRAJ_OUTPUT_DIR                   Default output directory (default: output)
  QTRAJ_WORKERS                      Default worker process count (default: 1)
        """
    )
    parser.add_argument(
        '--verbose', '-v',
        action='store_true',
        help='Enable verbose (DEBUG) logging'
    )
    parser.add_argument(
        '--log-file',
        type=str,
        default=None,
        help='Log file path (default: logs/ensemble_{timestamp}.log)'
    )

    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run the ensembles of a configuration')
    run_parser.add_argument('config', type=str, help='Run configuration (JSON)')
    run_parser.add_argument('--seed', type=int, help='Override the configured seed')
    run_parser.add_argument(
        '--workers',
        type=int,
        default=None,
        help='Number of parallel worker processes (default: $QTRAJ_WORKERS or 1)'
    )
    run_parser.add_argument(
        '--resume',
        action='store_true',
        help='Resume from last checkpoint (skip completed trajectories)'
    )
    run_parser.add_argument('--output-dir', type=str, help='Override the output directory')
    run_parser.add_argument('--no-progress', action='store_true', help='Hide progress bars')

    validate_parser = subparsers.add_parser('validate', help='Validate a configuration')
    validate_parser.add_argument('config', type=str, help='Run configuration (JSON)')
    validate_parser.add_argument('--seed', type=int, help='Override the configured seed')

    plot_parser = subparsers.add_parser('plot', help='Emit plot data and a matplotlib script')
    plot_parser.add_argument('summary', type=str, help='summary.csv written by run')
    plot_parser.add_argument('--output-dir', type=str, help='Directory for plot files (default: next to summary)')
    plot_parser.add_argument('--render', action='store_true', help='Also render a PNG')

    basins_parser = subparsers.add_parser('basins', help='Classify classical initial conditions')
    basins_parser.add_argument('config', type=str, help='Run configuration (duffing_pair or squid_pair)')
    basins_parser.add_argument('--grid-min', type=float, default=-2.0, help='Lowest initial coordinate')
    basins_parser.add_argument('--grid-max', type=float, default=2.0, help='Highest initial coordinate')
    basins_parser.add_argument('--grid-points', type=int, default=5, help='Grid points per coordinate')
    basins_parser.add_argument('--output-dir', type=str, help='Override the output directory')

    return parser.parse_args(argv)


def default_output_dir() -> str:
    return os.getenv('QTRAJ_OUTPUT_DIR', DEFAULT_OUTPUT_DIR)


def default_workers() -> int:
    try:
        return int(os.getenv('QTRAJ_WORKERS', '1'))
    except ValueError:
        return 1


# ============================================================================
# Subcommands
# ============================================================================

def command_run(args, logger) -> int:
    config = load_config(args.config, args.output_dir or default_output_dir(), args.seed)
    if args.output_dir:
        config.output_dir = args.output_dir
    workers = args.workers if args.workers is not None else default_workers()

    attach_run_log(logger, config.run_dir)
    logger.info(f"Run: {config.name} ({config.model}, {config.unravelling}), seed {config.seed}")
    logger.info(f"Output directory: {config.run_dir}")
    log_versions(logger)
    if args.resume:
        logger.info("RESUME mode: completed trajectories are reused")

    runner = EnsembleRunner(config, workers=workers, resume=args.resume, progress=not args.no_progress)
    rows = runner.run()
    runner.print_stats()

    unsettled = [row for row in rows if not row.settled]
    if unsettled:
        logger.warning(f"{len(unsettled)} of {len(rows)} ensemble(s) did not settle; see summary.csv")
    return EXIT_OK


def command_validate(args, logger) -> int:
    config = load_config(args.config, default_output_dir(), args.seed)
    points = config.ensemble_points()

    print('=' * 80)
    print(f"  {config.name}: {config.model}, {config.unravelling}")
    print('=' * 80)
    print(f"n_levels={config.n_levels}, dt={config.dt:g} periods, t_span={list(config.t_span)} periods, "
          f"n_trajectories={config.n_trajectories}, seed={config.seed}")
    for point in points:
        print()
        print(f"[{point.label}]")
        for name, value in describe_point(config, point).items():
            print(f"  {name:<20} {value:.6g}")
    print('=' * 80)
    logger.info(f"Configuration valid: {len(points)} ensemble(s)")
    return EXIT_OK


def command_plot(args, logger) -> int:
    summary_path = Path(args.summary)
    if not summary_path.exists():
        logger.error(f"Summary not found: {summary_path}")
        return EXIT_FAILURE
    output_dir = Path(args.output_dir) if args.output_dir else summary_path.parent
    try:
        paths = emit_plot(read_summary(summary_path), output_dir, render=args.render)
    except EmptySummaryError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def command_basins(args, logger) -> int:
    config = load_config(args.config, args.output_dir or default_output_dir())
    if args.output_dir:
        config.output_dir = args.output_dir
    if config.model not in ('duffing_pair', 'squid_pair'):
        raise ConfigError('model', "basin scans need duffing_pair or squid_pair")

    grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
    initial_states = pair_grid(grid, grid)
    n_periods = TRANSIENT_PERIODS + MIN_ANALYSIS_PERIODS

    rows = []
    seen = set()
    for point in config.ensemble_points():
        if point.sweep_value in seen:
            continue
        seen.add(point.sweep_value)

        if config.model == 'duffing_pair':
            params = DuffingParams(**point.params)
            period = 2.0 * math.pi
            dt = period / CLASSICAL_STEPS_PER_PERIOD

            def integrate(state, params=params, dt=dt, period=period):
                return integrate_duffing(state, params, (0.0, n_periods * period), dt)

            def amplitudes(state):
                return state.coherent_amplitudes()
        else:
            d = squid_dimensionless(squid_physical(point.params))
            mu = point.params['mu']
            period = d.drive_period
            dt = period / CLASSICAL_STEPS_PER_PERIOD

            def integrate(state, d=d, mu=mu, dt=dt, period=period):
                return integrate_rsj_pair(state, d, mu, (0.0, n_periods * period), dt)

            def amplitudes(state, d=d, frame=config.frame):
                # (phi, phi') to oscillator (x, p)
                positions = ClassicalState(
                    q=tuple(flux_to_position(q, d, frame) for q in state.q),
                    p=tuple(p * position_scale(d) for p in state.p),
                )
                return positions.coherent_amplitudes()

        logger.info(f"Scanning {len(initial_states)} initial conditions at {point.sweep_parameter}={point.sweep_value}")
        for basin_point in scan_basins(integrate, initial_states):
            state = basin_point.initial_state
            alpha = amplitudes(state)
            rows.append({
                'series': point.series,
                'sweep_value': point.sweep_value,
                'q1': state.q[0], 'q2': state.q[1], 'p1': state.p[0], 'p2': state.p[1],
                'alpha1_re': alpha[0].real, 'alpha1_im': alpha[0].imag,
                'alpha2_re': alpha[1].real, 'alpha2_im': alpha[1].imag,
                'regime': basin_point.classification.regime,
                'n_clusters': basin_point.classification.n_clusters,
                'lyapunov': basin_point.classification.lyapunov,
            })

    write_basins_csv(rows, config.run_dir / 'basins.csv')
    return EXIT_OK


COMMANDS = {
    'run': command_run,
    'validate': command_validate,
    'plot': command_plot,
    'basins': command_basins,
}


def main(argv=None):
    """Main entry point."""
    args = parse_arguments(argv)

    logger = setup_run_logger(verbose=args.verbose, log_file=args.log_file)

    try:
        return COMMANDS[args.command](args, logger)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except ResumeMismatchError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        import traceback
        logger.debug(traceback.format_exc())
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
