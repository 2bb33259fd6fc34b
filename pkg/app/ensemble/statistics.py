"""
Running ensemble statistics and the settled-mean criterion.

Per-time moments are accumulated with Welford updates and merged with the
pairwise (Chan) formula, so partial ensembles combine associatively. Each
trajectory also contributes its post-transient window mean, which is what
the settled mean and its standard error are computed from.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.models import TrajectoryRecord

logger = logging.getLogger(__name__)

DEFAULT_TRANSIENT_FRACTION = 0.25
DEFAULT_SETTLE_TOLERANCE = 0.01
SINGLE_TRAJECTORY_BATCHES = 10


class RunningMoments:
    """
    Count, mean and summed squared deviations of equally shaped samples.

    Example:
        >>> moments = RunningMoments()
        >>> moments.add(np.array([1.0, 2.0]))
        >>> moments.add(np.array([3.0, 4.0]))
        >>> moments.mean
        array([2., 3.])
    """

    def __init__(self, count: int = 0, mean=None, m2=None):
        self.count = int(count)
        self.mean = None if mean is None else np.array(mean, dtype=float)
        self.m2 = None if m2 is None else np.array(m2, dtype=float)

    def add(self, sample):
        sample = np.asarray(sample, dtype=float)
        if self.count == 0:
            self.count = 1
            self.mean = sample.copy()
            self.m2 = np.zeros_like(sample)
            return
        if sample.shape != self.mean.shape:
            raise ValueError(f"sample shape {sample.shape} does not match {self.mean.shape}")
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (sample - self.mean)

    def merge(self, other: 'RunningMoments') -> 'RunningMoments':
        """Combined moments of two disjoint sample sets (returns a new object)."""
        if other.count == 0:
            return copy.deepcopy(self)
        if self.count == 0:
            return copy.deepcopy(other)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / count)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / count)
        return RunningMoments(count, mean, m2)

    @property
    def variance(self):
        """Unbiased sample variance (zero below two samples)."""
        if self.count < 2:
            return np.zeros_like(self.mean) if self.mean is not None else 0.0
        return np.maximum(self.m2 / (self.count - 1), 0.0)

    @property
    def stderr(self):
        if self.count == 0:
            return None
        return np.sqrt(self.variance / self.count)


@dataclass
class EnsembleStats:
    """
    Running statistics of an ensemble of trajectory records.

    Attributes:
        times: Recorded times shared by all trajectories
        transient_fraction: Leading fraction of each trajectory excluded from window means
        settle_tolerance: Relative tolerance of the settled criterion
        moments: Observable -> per-time running moments
        window: Observable -> running moments of per-trajectory window means
        leakage_max: Largest leakage seen in any folded trajectory
        n_invalid: Aborted trajectories (excluded from the moments)
        settled: Outcome of the last settled-mean evaluation
    """
    times: Optional[np.ndarray] = None
    transient_fraction: float = DEFAULT_TRANSIENT_FRACTION
    settle_tolerance: float = DEFAULT_SETTLE_TOLERANCE
    moments: Dict[str, RunningMoments] = field(default_factory=dict)
    window: Dict[str, RunningMoments] = field(default_factory=dict)
    leakage_max: float = 0.0
    n_invalid: int = 0
    settled: bool = False

    @property
    def count(self) -> int:
        """Number of valid trajectories folded in."""
        if not self.moments:
            return 0
        return next(iter(self.moments.values())).count

    @property
    def observables(self) -> List[str]:
        return list(self.moments)

    def window_start(self) -> int:
        """Index of the first point after the transient."""
        n = len(self.times)
        return min(int(math.floor(self.transient_fraction * n)), n - 1)

    def add_record(self, record: TrajectoryRecord):
        """
        Fold one trajectory in.

        Invalid records only raise ``n_invalid`` and the leakage maximum.
        """
        self.leakage_max = max(self.leakage_max, record.max_leakage)
        if not record.valid:
            self.n_invalid += 1
            return

        if self.times is None:
            self.times = np.array(record.times, dtype=float)
        elif len(record.times) != len(self.times) or not np.array_equal(record.times, self.times):
            raise ValueError(f"trajectory {record.trajectory_index} was recorded on different times")

        start = self.window_start()
        for name in record.observable_names():
            series = np.asarray(record.observable(name), dtype=float)
            self.moments.setdefault(name, RunningMoments()).add(series)
            self.window.setdefault(name, RunningMoments()).add(np.array(series[start:].mean()))

    def merge(self, other: 'EnsembleStats') -> 'EnsembleStats':
        """Statistics of the union of two disjoint ensembles."""
        if self.times is not None and other.times is not None and not np.array_equal(self.times, other.times):
            raise ValueError("cannot merge ensembles recorded on different times")
        merged = EnsembleStats(
            times=self.times if self.times is not None else other.times,
            transient_fraction=self.transient_fraction,
            settle_tolerance=self.settle_tolerance,
            leakage_max=max(self.leakage_max, other.leakage_max),
            n_invalid=self.n_invalid + other.n_invalid,
        )
        for name in set(self.moments) | set(other.moments):
            merged.moments[name] = self.moments.get(name, RunningMoments()).merge(
                other.moments.get(name, RunningMoments()))
            merged.window[name] = self.window.get(name, RunningMoments()).merge(
                other.window.get(name, RunningMoments()))
        return merged

    def snapshot(self) -> 'EnsembleStats':
        return copy.deepcopy(self)

    def mean(self, name: str) -> np.ndarray:
        return self.moments[name].mean

    def variance(self, name: str) -> np.ndarray:
        return self.moments[name].variance

    def stderr(self, name: str) -> np.ndarray:
        return self.moments[name].stderr

    def window_estimate(self, name: str):
        """
        Time-and-ensemble mean over the post-transient window with its standard error.

        With two or more trajectories the error is taken across per-trajectory
        window means; a single trajectory falls back to the spread of 10 batch
        means of its window (NaN if the window is shorter than 10 points).

        Returns:
            (mean, stderr)
        """
        if name not in self.window:
            raise KeyError(f"observable {name!r} not recorded")
        window = self.window[name]
        if window.count == 0:
            return math.nan, math.nan
        mean = float(window.mean)
        if window.count >= 2:
            return mean, float(window.stderr)

        series = self.moments[name].mean[self.window_start():]
        if len(series) < SINGLE_TRAJECTORY_BATCHES:
            return mean, math.nan
        batch_means = np.array([batch.mean() for batch in np.array_split(series, SINGLE_TRAJECTORY_BATCHES)])
        return mean, float(batch_means.std(ddof=1) / math.sqrt(SINGLE_TRAJECTORY_BATCHES))

    # Persistence
    def save(self, path: Path):
        """Write to ``.npz``; the round trip is bit-exact."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {
            'times': self.times if self.times is not None else np.zeros(0),
            'transient_fraction': np.array(self.transient_fraction),
            'settle_tolerance': np.array(self.settle_tolerance),
            'leakage_max': np.array(self.leakage_max),
            'n_invalid': np.array(self.n_invalid),
            'settled': np.array(self.settled),
        }
        for name, moments in self.moments.items():
            arrays[f'moments__{name}__count'] = np.array(moments.count)
            arrays[f'moments__{name}__mean'] = moments.mean
            arrays[f'moments__{name}__m2'] = moments.m2
            window = self.window[name]
            arrays[f'window__{name}__count'] = np.array(window.count)
            arrays[f'window__{name}__mean'] = window.mean
            arrays[f'window__{name}__m2'] = window.m2
        with open(path, 'wb') as f:
            np.savez_compressed(f, **arrays)

    @classmethod
    def load(cls, path: Path) -> 'EnsembleStats':
        with np.load(Path(path), allow_pickle=False) as data:
            times = data['times']
            stats = cls(
                times=times if len(times) else None,
                transient_fraction=float(data['transient_fraction']),
                settle_tolerance=float(data['settle_tolerance']),
                leakage_max=float(data['leakage_max']),
                n_invalid=int(data['n_invalid']),
                settled=bool(data['settled']),
            )
            for key in data.files:
                if not key.endswith('__count'):
                    continue
                kind, name, _ = key.split('__')
                moments = RunningMoments(
                    int(data[key]), data[f'{kind}__{name}__mean'], data[f'{kind}__{name}__m2']
                )
                getattr(stats, 'moments' if kind == 'moments' else 'window')[name] = moments
        return stats


@dataclass(frozen=True)
class SettledMean:
    """
    Settled time-and-ensemble mean.

    Attributes:
        mean: Mean over the post-transient window of the last snapshot
        stderr: Its standard error
        settled: Criterion outcome
        count: Trajectories in the last snapshot
        relative_change: |mean_last - mean_previous| / |mean_last|
    """
    mean: float
    stderr: float
    settled: bool
    count: int
    relative_change: float


def _within(value: float, bound: float) -> bool:
    return value == 0.0 or value < bound


def settled_mean(snapshots: Sequence[EnsembleStats], observable: str = 'entropy',
                 settle_tolerance: Optional[float] = None) -> SettledMean:
    """
    Settled mean of an observable from doubling-count snapshots.

    Settled when the last two snapshots' window means differ by less than
    ``settle_tolerance`` relatively and the standard error is below
    ``settle_tolerance * |mean|``. An exact zero counts as within tolerance,
    so a constant series settles immediately even at zero.

    Args:
        snapshots: EnsembleStats at increasing trajectory counts (at least 2)
        observable: Observable name
        settle_tolerance: Defaults to the last snapshot's tolerance

    Returns:
        SettledMean

    Raises:
        ValueError: With fewer than two snapshots
    """
    if len(snapshots) < 2:
        raise ValueError(f"settled_mean needs at least 2 snapshots, got {len(snapshots)}")
    last, previous = snapshots[-1], snapshots[-2]
    tolerance = settle_tolerance if settle_tolerance is not None else last.settle_tolerance

    mean, stderr = last.window_estimate(observable)
    previous_mean, _ = previous.window_estimate(observable)

    difference = abs(mean - previous_mean)
    bound = tolerance * abs(mean)
    relative_change = difference / abs(mean) if mean != 0 else (0.0 if difference == 0 else math.inf)
    settled = (
        math.isfinite(stderr)
        and _within(difference, bound)
        and _within(stderr, bound)
    )
    return SettledMean(mean=mean, stderr=stderr, settled=settled, count=last.count,
                       relative_change=relative_change)


def doubling_counts(n_trajectories: int) -> List[int]:
    """1, 2, 4, ... below n_trajectories, then n_trajectories itself."""
    counts = []
    count = 1
    while count < n_trajectories:
        counts.append(count)
        count *= 2
    counts.append(n_trajectories)
    return counts


def fold_records(records: Sequence[TrajectoryRecord], transient_fraction: float = DEFAULT_TRANSIENT_FRACTION,
                 settle_tolerance: float = DEFAULT_SETTLE_TOLERANCE):
    """
    Fold records in the given order, snapshotting at doubling counts.

    Counts refer to folded records (valid or not), so the snapshot schedule
    depends only on the ensemble size.

    Returns:
        (final EnsembleStats, list of snapshots)
    """
    stats = EnsembleStats(transient_fraction=transient_fraction, settle_tolerance=settle_tolerance)
    marks = set(doubling_counts(len(records))) if records else set()
    snapshots = []
    for folded, record in enumerate(records, start=1):
        stats.add_record(record)
        if folded in marks:
            snapshots.append(stats.snapshot())
    return stats, snapshots
