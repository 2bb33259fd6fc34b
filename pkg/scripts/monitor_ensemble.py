#!/usr/bin/env python3
"""
Watch the progress of an ensemble run from another terminal.

Reads ``checkpoint.json`` from a run directory and prints one line per sweep
point, plus a tally of why trajectories aborted.

Usage:
    python scripts/monitor_ensemble.py output/duffing_beta_sweep
    python scripts/monitor_ensemble.py output/duffing_beta_sweep --once
"""

import argparse
import json
import time
from collections import Counter
from pathlib import Path


def load_checkpoint(run_dir):
    """Checkpoint document of ``run_dir``, or None before the run starts."""
    path = Path(run_dir) / 'checkpoint.json'
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding='utf-8'))


def _point_line(label, entry):
    total = entry.get('n_trajectories', 0)
    done = len(entry.get('completed', []))
    share = 100.0 * done / total if total else 0.0
    state = 'done' if entry.get('finished') else 'running'
    line = f'  {label[:48]:48} {done:6}/{total:<6} ({share:5.1f}%) {state}'

    result = entry.get('result')
    if result:
        flag = 'settled' if result.get('settled') else 'NOT settled'
        line += f'  mean {result.get("observable")} = {result.get("mean"):.4g} ({flag})'
    return line


def display_progress(data):
    """Print a progress report for a checkpoint document."""
    if not data:
        print('No checkpoint yet: the run has not started')
        return

    stats = data.get('statistics', {})
    ensembles = data.get('ensembles', {})
    reasons = Counter(
        reason
        for entry in ensembles.values()
        for reason in entry.get('invalid', {}).values()
    )

    print('=' * 80)
    print(f'  Ensemble progress  (updated {data.get("metadata", {}).get("last_updated", "unknown")})')
    print('=' * 80)
    print(f'Trajectories completed: {stats.get("total_trajectories_completed", 0)}')
    print(f'Trajectories invalid:   {stats.get("total_trajectories_invalid", 0)}')
    print(f'Sweep points finished:  {stats.get("total_ensembles_completed", 0)}/{len(ensembles)}')
    print()
    for label, entry in ensembles.items():
        print(_point_line(label, entry))
    if reasons:
        print()
        print('Abort reasons:')
        for reason, count in reasons.most_common():
            print(f'  {count:6}  {reason}')
    print('=' * 80)


def main():
    parser = argparse.ArgumentParser(description='Monitor ensemble progress')
    parser.add_argument('run_dir', help='Run directory (output/<name>)')
    parser.add_argument('--interval', '-i', type=int, default=10, help='Refresh interval in seconds')
    parser.add_argument('--once', action='store_true', help='Print once and exit')
    args = parser.parse_args()

    while True:
        display_progress(load_checkpoint(args.run_dir))
        if args.once:
            return 0
        try:
            time.sleep(args.interval)
        except KeyboardInterrupt:
            print('\nMonitoring stopped.')
            return 0


if __name__ == '__main__':
    raise SystemExit(main())
