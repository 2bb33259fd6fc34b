"""
Result files: per-time observable CSVs, the sweep summary table and
figure-ready plot data plus a matplotlib script.

All CSVs are UTF-8 with LF line endings and 17 significant digits, so a
fixed (config, seed) produces byte-identical files.
"""

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.ensemble.statistics import EnsembleStats

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ['time', 'observable', 'value', 'stderr', 'count']
SUMMARY_COLUMNS = [
    'series', 'sweep_parameter', 'sweep_value', 'observable', 'units', 'mean', 'stderr',
    'settled', 'relative_change', 'leakage_max', 'n_trajectories', 'n_invalid',
]
PLOT_COLUMNS = ['series', 'x', 'mean', 'stderr', 'settled']

# Quantum limit at small capacitance (left); the Duffing classical limit is beta -> 0
AXIS_NOTES = {
    'capacitance': 'capacitance C (F), log scale: the quantum limit is on the left hand side',
    'params.scale.a': 'capacitance scale factor a, log scale: the quantum limit is on the left hand side',
    'params.beta': 'beta: the classical limit is beta -> 0 on the left hand side',
}


class EmptySummaryError(ValueError):
    """The summary table has no rows to plot."""
    pass


def format_number(value) -> str:
    """Full-precision text form of a number (17 significant digits)."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return 'nan'
    return '%.17g' % value


def _write_csv(path: Path, fieldnames: List[str], rows: Iterable[Dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: value if isinstance(value, str) else format_number(value)
                             for key, value in row.items()})


# ============================================================================
# Time series
# ============================================================================

def series_rows(stats: EnsembleStats) -> List[Dict]:
    """Rows of (time, observable, value, stderr, count), observable-major."""
    rows = []
    for name in stats.observables:
        means = stats.mean(name)
        errors = stats.stderr(name)
        for tau, value, error in zip(stats.times, means, errors):
            rows.append({'time': tau, 'observable': name, 'value': value, 'stderr': error,
                         'count': stats.count})
    return rows


def write_series_csv(stats: EnsembleStats, path: Path):
    _write_csv(path, SERIES_COLUMNS, series_rows(stats))
    logger.debug(f"Wrote {path}")


def write_deterministic_csv(times: Sequence[float], series: Dict[str, Sequence[float]], path: Path):
    """Series CSV for deterministic data (oracle or classical): stderr 0, count 1."""
    rows = []
    for name, values in series.items():
        for tau, value in zip(times, values):
            rows.append({'time': tau, 'observable': name, 'value': value, 'stderr': 0.0, 'count': 1})
    _write_csv(path, SERIES_COLUMNS, rows)
    logger.debug(f"Wrote {path}")


def read_series_csv(path: Path) -> Dict[str, Dict[str, np.ndarray]]:
    """Observable -> {'time', 'value', 'stderr', 'count'} arrays."""
    columns: Dict[str, Dict[str, list]] = {}
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for row in csv.DictReader(f):
            entry = columns.setdefault(row['observable'], {'time': [], 'value': [], 'stderr': [], 'count': []})
            for key in ('time', 'value', 'stderr', 'count'):
                entry[key].append(float(row[key]))
    return {name: {key: np.array(values) for key, values in entry.items()} for name, entry in columns.items()}


# ============================================================================
# Summary table
# ============================================================================

@dataclass
class SummaryRow:
    """One ensemble's settled result."""
    series: str
    sweep_parameter: str
    sweep_value: Optional[float]
    observable: str
    units: str
    mean: float
    stderr: float
    settled: bool
    relative_change: float
    leakage_max: float
    n_trajectories: int
    n_invalid: int


def write_summary(rows: Sequence[SummaryRow], path: Path):
    _write_csv(path, SUMMARY_COLUMNS, (asdict(row) for row in rows))
    logger.info(f"Summary written to {path} ({len(rows)} row(s))")


def _parse_optional_float(text: str) -> Optional[float]:
    return float(text) if text != '' else None


def read_summary(path: Path) -> List[SummaryRow]:
    rows = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for raw in csv.DictReader(f):
            rows.append(SummaryRow(
                series=raw['series'],
                sweep_parameter=raw['sweep_parameter'],
                sweep_value=_parse_optional_float(raw['sweep_value']),
                observable=raw['observable'],
                units=raw['units'],
                mean=float(raw['mean']),
                stderr=float(raw['stderr']),
                settled=raw['settled'] == 'true',
                relative_change=float(raw['relative_change']),
                leakage_max=float(raw['leakage_max']),
                n_trajectories=int(raw['n_trajectories']),
                n_invalid=int(raw['n_invalid']),
            ))
    return rows


# ============================================================================
# Plots
# ============================================================================

PLOT_SCRIPT = '''"""
Mean {observable} ({units}) against {parameter}.

x axis: {axis_note}
Error bars are the recorded standard errors; open markers are unsettled ensembles.
Run with: python {script_name} [output.png]
"""

import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

DATA = Path(__file__).with_name("{data_name}")
LOG_X = {log_x}

series = {{}}
with open(DATA, encoding="utf-8", newline="") as f:
    for row in csv.DictReader(f):
        points = series.setdefault(row["series"], [])
        points.append((float(row["x"]), float(row["mean"]), float(row["stderr"]), row["settled"] == "true"))

fig, ax = plt.subplots(figsize=(6, 4))
for label, points in series.items():
    points.sort()
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    errors = [0.0 if p[2] != p[2] else p[2] for p in points]
    line = ax.errorbar(xs, ys, yerr=errors, marker="o", capsize=3, label=label)
    unsettled = [(p[0], p[1]) for p in points if not p[3]]
    if unsettled:
        ax.plot(*zip(*unsettled), linestyle="none", marker="o", markerfacecolor="white",
                color=line[0].get_color())

if LOG_X:
    ax.set_xscale("log")
ax.set_xlabel("{x_label}")
ax.set_ylabel("mean {observable} ({units})")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else DATA.with_suffix(".png"), dpi=150)
'''


def _use_log_axis(xs: Sequence[float]) -> bool:
    positive = [x for x in xs if x > 0]
    return len(positive) == len(xs) and len(xs) > 1 and max(positive) / min(positive) >= 10.0


def plot_rows(summary: Sequence[SummaryRow]) -> List[Dict]:
    """Plot data rows; a run without a sweep plots at x = 0."""
    return [{
        'series': row.series,
        'x': row.sweep_value if row.sweep_value is not None else 0.0,
        'mean': row.mean,
        'stderr': row.stderr,
        'settled': row.settled,
    } for row in summary]


def emit_plot(summary: Sequence[SummaryRow], output_dir: Path, stem: str = 'entropy_plot',
              render: bool = False) -> Dict[str, Path]:
    """
    Write plot data and a matplotlib script rendering mean vs sweep value.

    Args:
        summary: Summary rows (one per ensemble)
        output_dir: Directory for the generated files
        stem: Base name of the generated files
        render: Also run the plot and write a PNG

    Returns:
        {'data': csv path, 'script': script path[, 'image': png path]}

    Raises:
        EmptySummaryError: If ``summary`` has no rows
    """
    if not summary:
        raise EmptySummaryError("summary table is empty; nothing to plot")

    output_dir = Path(output_dir)
    data_path = output_dir / f"{stem}.csv"
    script_path = output_dir / f"{stem}.py"
    rows = plot_rows(summary)
    _write_csv(data_path, PLOT_COLUMNS, rows)

    parameter = summary[0].sweep_parameter or 'none'
    observable = summary[0].observable
    units = summary[0].units
    log_x = _use_log_axis([row['x'] for row in rows])
    axis_note = AXIS_NOTES.get(parameter, f"{parameter} as configured")
    script = PLOT_SCRIPT.format(
        observable=observable,
        units=units,
        parameter=parameter,
        axis_note=axis_note,
        script_name=script_path.name,
        data_name=data_path.name,
        log_x=log_x,
        x_label=parameter,
    )
    with open(script_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(script)

    paths = {'data': data_path, 'script': script_path}
    logger.info(f"Plot data written to {data_path}, script to {script_path}")

    if render:
        paths['image'] = render_plot(rows, output_dir / f"{stem}.png", parameter, observable, units, log_x)
    return paths


def render_plot(rows: Sequence[Dict], path: Path, parameter: str, observable: str, units: str,
                log_x: bool) -> Path:
    """Render plot rows to a PNG with matplotlib."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    series: Dict[str, list] = {}
    for row in rows:
        series.setdefault(row['series'], []).append(row)

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in series.items():
        points = sorted(points, key=lambda r: r['x'])
        errors = [0.0 if math.isnan(p['stderr']) else p['stderr'] for p in points]
        ax.errorbar([p['x'] for p in points], [p['mean'] for p in points], yerr=errors,
                    marker='o', capsize=3, label=label)
    if log_x:
        ax.set_xscale('log')
    ax.set_xlabel(parameter)
    ax.set_ylabel(f"mean {observable} ({units})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info(f"Rendered {path}")
    return path


# ============================================================================
# Basin scans
# ============================================================================

BASIN_COLUMNS = ['series', 'sweep_value', 'q1', 'q2', 'p1', 'p2', 'alpha1_re', 'alpha1_im',
                 'alpha2_re', 'alpha2_im', 'regime', 'n_clusters', 'lyapunov']


def write_basins_csv(rows: Sequence[Dict], path: Path):
    """One row per scanned initial condition; alpha columns give the matching coherent amplitudes."""
    _write_csv(path, BASIN_COLUMNS, rows)
    logger.info(f"Basin scan written to {path} ({len(rows)} row(s))")
