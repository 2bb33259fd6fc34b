"""
Stochastic unravellings of the master equation.

Both unravellings are integrated with explicit Euler-Maruyama steps in Ito
form, expectation values taken in the pre-step state, followed by
renormalisation of the state vector:

- quantum state diffusion (complex Wiener noise, E[dxi] = E[dxi^2] = 0,
  E[|dxi|^2] = dt),
- quantum jumps (Poisson counting noise, one uniform draw per step
  partitioned into channel intervals so dN_j dN_k = delta_jk dN_j).

Noise streams are PCG64 generators seeded from SeedSequence(seed,
spawn_key=(trajectory_index,)), so every trajectory is reproducible on its
own regardless of how an ensemble is scheduled.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from app.models import TrajectoryRecord
from app.physics.hilbert import check_state, leakage
from app.physics.observables import entanglement_entropy
from app.physics.systems import SystemModel, default_observables

logger = logging.getLogger(__name__)

RNG_ALGORITHM = 'PCG64'
UNRAVELLINGS = ('qsd', 'jumps')
NOISE_KINDS = ('complex-wiener', 'poisson')

DEFAULT_LEAKAGE_LIMIT = 1e-4
DEFAULT_JUMP_PROBABILITY_LIMIT = 0.1


class TrajectoryAbort(Exception):
    """Base class for conditions that end a trajectory early."""
    pass


class LeakageError(TrajectoryAbort):
    """Population in the top Fock levels exceeded the configured limit."""
    pass


class StepSizeError(TrajectoryAbort):
    """<L^dagger L> dt reached the jump-probability limit."""
    pass


class NonFiniteStateError(TrajectoryAbort):
    """The state vector picked up NaN or inf entries."""
    pass


class NoiseStream:
    """
    Reproducible noise for one trajectory.

    Attributes:
        seed: 64-bit run seed
        trajectory_index: Index of the trajectory within its ensemble
        kind: 'complex-wiener' (QSD) or 'poisson' (jumps)
    """

    def __init__(self, seed: int, trajectory_index: int = 0, kind: str = 'complex-wiener'):
        if kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got '{kind}'")
        self.seed = int(seed)
        self.trajectory_index = int(trajectory_index)
        self.kind = kind
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.trajectory_index,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def complex_wiener(self, n_channels: int, dt: float) -> np.ndarray:
        """Independent complex increments with E[|dxi|^2] = dt and E[dxi^2] = 0."""
        if self.kind != 'complex-wiener':
            raise ValueError("complex_wiener() called on a poisson stream")
        draws = self.generator.standard_normal((2, n_channels))
        return (draws[0] + 1j * draws[1]) * math.sqrt(0.5 * dt)

    def uniform(self) -> float:
        """One uniform draw in [0, 1), used to pick at most one jump channel."""
        if self.kind != 'poisson':
            raise ValueError("uniform() called on a complex-wiener stream")
        return float(self.generator.random())


@dataclass(frozen=True)
class StepperConfig:
    """
    Integrator settings.

    Attributes:
        dt: Time step (dimensionless)
        renorm: Renormalise the state after every step
        unravelling: 'qsd' or 'jumps'
        leakage_limit: Abort when top-level population exceeds this
        jump_probability_limit: Abort when <L^dagger L> dt reaches this (jumps)
    """
    dt: float
    renorm: bool = True
    unravelling: str = 'qsd'
    leakage_limit: float = DEFAULT_LEAKAGE_LIMIT
    jump_probability_limit: float = DEFAULT_JUMP_PROBABILITY_LIMIT

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.unravelling not in UNRAVELLINGS:
            raise ValueError(f"unravelling must be one of {UNRAVELLINGS}, got '{self.unravelling}'")

    @property
    def noise_kind(self) -> str:
        return 'complex-wiener' if self.unravelling == 'qsd' else 'poisson'


# ============================================================================
# Single steps
# ============================================================================

def _check_finite(psi: np.ndarray, tau: float):
    if not np.all(np.isfinite(psi)):
        raise NonFiniteStateError(f"non-finite state at tau={tau:.6g}")


def _check_leakage(psi: np.ndarray, model: SystemModel, tau: float, limit: Optional[float]):
    if limit is None:
        return
    leak = leakage(psi, model.space)
    if leak > limit:
        raise LeakageError(f"leakage {leak:.3e} exceeds {limit:.1e} at tau={tau:.6g}")


def qsd_increment(psi: np.ndarray, model: SystemModel, tau: float, dt: float,
                  dxi: Sequence[complex]) -> np.ndarray:
    """
    Ito increment of quantum state diffusion.

    d psi = -i H psi dt
            + sum_j [<L_j^dag> L_j - L_j^dag L_j / 2 - <L_j^dag><L_j> / 2] psi dt
            + sum_j (L_j - <L_j>) psi dxi_j
    """
    dpsi = -1j * dt * model.apply_hamiltonian(tau, psi)
    for op, product, noise in zip(model.lindblad_ops, model.lindblad_products, dxi):
        l_psi = op @ psi
        l = np.vdot(psi, l_psi)
        drift = np.conj(l) * l_psi - 0.5 * (product @ psi) - 0.5 * abs(l) ** 2 * psi
        dpsi += drift * dt + (l_psi - l * psi) * noise
    return dpsi


def qsd_step(psi: np.ndarray, model: SystemModel, tau: float, dt: float, noise: NoiseStream,
             renorm: bool = True, leakage_limit: Optional[float] = None) -> np.ndarray:
    """
    Advance a state by one QSD step.

    Args:
        psi: Normalized state at tau
        model: System model
        tau: Current time
        dt: Step size
        noise: Complex-Wiener noise stream
        renorm: Renormalise the result
        leakage_limit: Raise LeakageError above this top-level population

    Returns:
        State at tau + dt
    """
    dxi = noise.complex_wiener(len(model.lindblad_ops), dt)
    new = psi + qsd_increment(psi, model, tau, dt, dxi)
    _check_finite(new, tau)
    if renorm:
        new = new / np.linalg.norm(new)
    _check_leakage(new, model, tau + dt, leakage_limit)
    return new


def jump_probabilities(psi: np.ndarray, model: SystemModel, dt: float) -> np.ndarray:
    """p_j = <L_j^dagger L_j> dt for every channel."""
    return np.array([np.vdot(psi, product @ psi).real * dt for product in model.lindblad_products])


def _jump_candidate(psi: np.ndarray, model: SystemModel, tau: float, dt: float, draw: float,
                    probability_limit: float) -> Tuple[np.ndarray, Optional[int]]:
    probabilities = jump_probabilities(psi, model, dt)
    if len(probabilities) and probabilities.max() >= probability_limit:
        channel = int(np.argmax(probabilities))
        raise StepSizeError(
            f"<L^dag L> dt = {probabilities[channel]:.3e} on channel {channel} "
            f"reaches {probability_limit} at tau={tau:.6g}; reduce dt"
        )

    cumulative = 0.0
    for channel, probability in enumerate(probabilities):
        cumulative += probability
        if draw < cumulative:
            jumped = model.lindblad_ops[channel] @ psi
            return jumped / np.linalg.norm(jumped), channel

    # No jump: d psi = [-i H - (1/2) sum_j (L_j^dag L_j - <L_j^dag L_j>)] psi dt
    rates = probabilities / dt
    drift = -1j * model.apply_hamiltonian(tau, psi) - 0.5 * (model.decay_operator @ psi)
    drift += 0.5 * rates.sum() * psi
    return psi + drift * dt, None


def jump_update(psi: np.ndarray, model: SystemModel, tau: float, dt: float, noise: NoiseStream,
                renorm: bool = True, probability_limit: float = DEFAULT_JUMP_PROBABILITY_LIMIT,
                leakage_limit: Optional[float] = None) -> Tuple[np.ndarray, Optional[int]]:
    """
    One quantum-jumps step, reporting which channel fired (None if none did).

    Raises:
        StepSizeError: If any <L_j^dag L_j> dt reaches ``probability_limit``
    """
    new, channel = _jump_candidate(psi, model, tau, dt, noise.uniform(), probability_limit)
    _check_finite(new, tau)
    if renorm:
        new = new / np.linalg.norm(new)
    _check_leakage(new, model, tau + dt, leakage_limit)
    return new, channel


def jump_step(psi: np.ndarray, model: SystemModel, tau: float, dt: float, noise: NoiseStream,
              renorm: bool = True, probability_limit: float = DEFAULT_JUMP_PROBABILITY_LIMIT,
              leakage_limit: Optional[float] = None) -> np.ndarray:
    """Advance a state by one quantum-jumps step."""
    new, _ = jump_update(psi, model, tau, dt, noise, renorm, probability_limit, leakage_limit)
    return new


# ============================================================================
# Trajectories
# ============================================================================

def run_trajectory(model: SystemModel, psi0: np.ndarray, config: StepperConfig, seed: int,
                   t_span: Tuple[float, float], record_every: int = 1,
                   trajectory_index: int = 0,
                   observables: Optional[Dict[str, sp.spmatrix]] = None,
                   keep_final_state: bool = True) -> TrajectoryRecord:
    """
    Integrate one trajectory and record observables along the way.

    The result is a deterministic function of (model, psi0, config, seed,
    trajectory_index). An abort (leakage, step size, non-finite state) ends
    the trajectory early and is recorded rather than raised.

    Args:
        model: System model
        psi0: Normalized initial state
        config: Stepper configuration
        seed: Run seed
        t_span: (t0, t1) in model time units
        record_every: Number of steps between recorded points
        trajectory_index: Index within the ensemble (selects the noise stream)
        observables: Name -> Hermitian operator (defaults to x, p, n per mode)
        keep_final_state: Store the last state in the record

    Returns:
        TrajectoryRecord
    """
    space = model.space
    check_state(psi0, space)
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_steps = int(round((t1 - t0) / config.dt))
    if n_steps < 1:
        raise ValueError(f"t_span {t_span} shorter than one step of {config.dt}")

    observables = observables if observables is not None else default_observables(space)
    noise = NoiseStream(seed, trajectory_index, config.noise_kind)
    two_modes = space.n_modes == 2

    times, entropies, leaks, drifts = [], [], [], []
    expectations = {name: [] for name in observables}
    jump_times, jump_channels = [], []

    def record(tau: float, psi: np.ndarray, drift: float):
        measured = psi if config.renorm else psi / np.linalg.norm(psi)
        times.append(tau)
        for name, op in observables.items():
            expectations[name].append(np.vdot(measured, op @ measured).real)
        if two_modes:
            entropies.append(entanglement_entropy(measured, space))
        leaks.append(leakage(measured, space))
        drifts.append(drift)

    psi = np.array(psi0, dtype=np.complex128, copy=True)
    record(t0, psi, 0.0)
    worst_drift = 0.0
    valid = True
    abort_reason = None

    try:
        for step in range(n_steps):
            tau = t0 + step * config.dt
            if config.unravelling == 'qsd':
                dxi = noise.complex_wiener(len(model.lindblad_ops), config.dt)
                candidate = psi + qsd_increment(psi, model, tau, config.dt, dxi)
            else:
                candidate, channel = _jump_candidate(
                    psi, model, tau, config.dt, noise.uniform(), config.jump_probability_limit
                )
                if channel is not None:
                    jump_times.append(tau + config.dt)
                    jump_channels.append(channel)

            _check_finite(candidate, tau)
            norm = np.linalg.norm(candidate)
            worst_drift = max(worst_drift, abs(norm - 1.0))
            psi = candidate / norm if config.renorm else candidate

            tau_next = t0 + (step + 1) * config.dt
            _check_leakage(psi if config.renorm else psi / norm, model, tau_next, config.leakage_limit)

            if (step + 1) % record_every == 0:
                record(tau_next, psi, worst_drift)
                worst_drift = 0.0

    except TrajectoryAbort as e:
        valid = False
        abort_reason = f"{type(e).__name__}: {e}"
        logger.warning(f"Trajectory {trajectory_index} (seed {seed}) aborted: {abort_reason}")

    logger.debug(
        f"Trajectory {trajectory_index} finished: {len(times)} points, "
        f"{len(jump_times)} jumps, valid={valid}"
    )

    return TrajectoryRecord(
        seed=int(seed),
        trajectory_index=int(trajectory_index),
        unravelling=config.unravelling,
        times=np.array(times),
        expectations={name: np.array(values) for name, values in expectations.items()},
        entropy=np.array(entropies),
        leakage=np.array(leaks),
        norm_drift=np.array(drifts),
        jump_times=np.array(jump_times),
        jump_channels=np.array(jump_channels, dtype=np.int64),
        valid=valid,
        abort_reason=abort_reason,
        final_state=psi.copy() if keep_final_state else None,
    )
