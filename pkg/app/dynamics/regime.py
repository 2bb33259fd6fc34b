"""
Entrained vs chaotic classification of classical trajectories, and basin
scans over initial conditions.

A trajectory is entrained when its stroboscopic section (one sample per
drive period after the transient) collapses onto fewer than 4 points within
a radius of 1e-3 and the largest Lyapunov exponent is negative; it is
chaotic when the exponent exceeds 0.01 per drive period. Anything else is
reported as ambiguous.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from app.dynamics.classical import ClassicalState, ClassicalTrajectory
from app.utils.integrators import rk4_step

logger = logging.getLogger(__name__)

ENTRAINED = 'entrained'
CHAOTIC = 'chaotic'
AMBIGUOUS = 'ambiguous'

TRANSIENT_PERIODS = 50
MIN_ANALYSIS_PERIODS = 200
CLUSTER_RADIUS = 1e-3
MAX_CLUSTERS = 3
CHAOS_THRESHOLD = 0.01          # per drive period
LYAPUNOV_PERIODS = 100
SEPARATION = 1e-8


@dataclass(frozen=True)
class RegimeClassification:
    """
    Result of :func:`classify_regime`.

    Attributes:
        regime: 'entrained', 'chaotic' or 'ambiguous'
        n_clusters: Stroboscopic clusters found (MAX_CLUSTERS + 1 means "more")
        lyapunov: Largest Lyapunov exponent estimate per drive period
    """
    regime: str
    n_clusters: int
    lyapunov: float

    @property
    def is_entrained(self) -> bool:
        return self.regime == ENTRAINED

    @property
    def is_chaotic(self) -> bool:
        return self.regime == CHAOTIC


def stroboscopic_section(trajectory: ClassicalTrajectory, drive_period: float,
                         transient_periods: int = TRANSIENT_PERIODS) -> np.ndarray:
    """
    Sample the trajectory once per drive period after the transient.

    Raises:
        ValueError: If the sample spacing does not divide the drive period
    """
    spacing = trajectory.times[1] - trajectory.times[0]
    per_period = drive_period / spacing
    samples_per_period = int(round(per_period))
    if samples_per_period < 1 or abs(per_period - samples_per_period) > 1e-6 * per_period:
        raise ValueError(
            f"sample spacing {spacing:g} does not divide the drive period {drive_period:g}"
        )
    start = transient_periods * samples_per_period
    return trajectory.states[start::samples_per_period]


def count_clusters(points: np.ndarray, radius: float = CLUSTER_RADIUS,
                   max_clusters: int = MAX_CLUSTERS) -> int:
    """
    Greedy clustering of section points; stops counting past ``max_clusters``.

    Returns:
        Number of clusters, or max_clusters + 1 if there are more
    """
    centres: List[np.ndarray] = []
    for point in points:
        if any(np.linalg.norm(point - centre) < radius for centre in centres):
            continue
        centres.append(point)
        if len(centres) > max_clusters:
            break
    return len(centres)


def largest_lyapunov(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t0: float,
                     dt: float, drive_period: float, n_periods: int = LYAPUNOV_PERIODS,
                     separation: float = SEPARATION) -> float:
    """
    Benettin estimate of the largest Lyapunov exponent.

    A reference and a perturbed trajectory are advanced together; their
    separation is measured and reset to ``separation`` once per drive period.

    Returns:
        Exponent per drive period
    """
    steps_per_period = int(round(drive_period / dt))
    reference = np.array(y0, dtype=float)
    direction = np.ones_like(reference) / math.sqrt(reference.size)
    perturbed = reference + separation * direction

    total = 0.0
    step = 0
    for _ in range(n_periods):
        for _ in range(steps_per_period):
            t = t0 + step * dt
            reference = rk4_step(rhs, t, reference, dt)
            perturbed = rk4_step(rhs, t, perturbed, dt)
            step += 1
        distance = np.linalg.norm(perturbed - reference)
        if distance == 0.0:
            return -math.inf
        total += math.log(distance / separation)
        perturbed = reference + (separation / distance) * (perturbed - reference)
    return total / n_periods


def classify_regime(trajectory: ClassicalTrajectory, drive_period: Optional[float] = None,
                    transient_periods: int = TRANSIENT_PERIODS,
                    min_periods: int = MIN_ANALYSIS_PERIODS,
                    lyapunov_periods: int = LYAPUNOV_PERIODS) -> RegimeClassification:
    """
    Classify a classical trajectory as entrained, chaotic or ambiguous.

    Args:
        trajectory: Trajectory spanning transient_periods + min_periods drive periods
        drive_period: Defaults to the trajectory's own drive period
        transient_periods: Periods discarded before sampling
        min_periods: Periods required after the transient
        lyapunov_periods: Periods used by the Lyapunov estimate

    Returns:
        RegimeClassification

    Raises:
        ValueError: If the trajectory is too short
    """
    period = drive_period if drive_period is not None else trajectory.drive_period
    span = trajectory.times[-1] - trajectory.times[0]
    required = (transient_periods + min_periods) * period
    if span < required * (1.0 - 1e-9):
        raise ValueError(
            f"trajectory spans {span / period:.1f} drive periods; "
            f"{transient_periods + min_periods} required"
        )

    section = stroboscopic_section(trajectory, period, transient_periods)
    n_clusters = count_clusters(section)

    start = transient_periods * int(round(period / (trajectory.times[1] - trajectory.times[0])))
    lyapunov = largest_lyapunov(
        trajectory.rhs, trajectory.states[start], trajectory.times[start],
        trajectory.dt, period, lyapunov_periods,
    )

    if n_clusters <= MAX_CLUSTERS and lyapunov < 0:
        regime = ENTRAINED
    elif lyapunov > CHAOS_THRESHOLD:
        regime = CHAOTIC
    else:
        regime = AMBIGUOUS

    logger.debug(f"Regime {regime}: {n_clusters} cluster(s), lambda={lyapunov:.4g}/period")
    return RegimeClassification(regime=regime, n_clusters=n_clusters, lyapunov=lyapunov)


# ============================================================================
# Basin scans
# ============================================================================

@dataclass(frozen=True)
class BasinPoint:
    """Initial condition and the regime its trajectory settles into."""
    initial_state: ClassicalState
    classification: RegimeClassification


def scan_basins(integrate: Callable[[ClassicalState], ClassicalTrajectory],
                initial_states: Iterable[ClassicalState],
                **classify_kwargs) -> List[BasinPoint]:
    """
    Classify the trajectory started from each initial condition.

    Args:
        integrate: Maps an initial state to a long enough trajectory
        initial_states: Initial conditions to try
        **classify_kwargs: Forwarded to :func:`classify_regime`

    Returns:
        One BasinPoint per initial state, in input order
    """
    points = []
    for state in initial_states:
        classification = classify_regime(integrate(state), **classify_kwargs)
        points.append(BasinPoint(state, classification))

    counts = {}
    for point in points:
        counts[point.classification.regime] = counts.get(point.classification.regime, 0) + 1
    logger.info(f"Basin scan over {len(points)} initial conditions: {counts}")
    return points


def pair_grid(q1_values: Sequence[float], q2_values: Sequence[float]) -> List[ClassicalState]:
    """Initial conditions (q1, q2) at rest, for a two-degree-of-freedom scan."""
    return [ClassicalState(q=(float(q1), float(q2)), p=(0.0, 0.0)) for q1 in q1_values for q2 in q2_values]


def first_of_regime(points: Iterable[BasinPoint], regime: str) -> Optional[BasinPoint]:
    """First scanned point that landed in ``regime``, or None."""
    for point in points:
        if point.classification.regime == regime:
            return point
    return None
