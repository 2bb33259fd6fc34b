"""
Data models for the trajectory simulations.

Parameter records for the two oscillator families and the per-trajectory
record produced by the stochastic integrators.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import numpy as np


@dataclass(frozen=True)
class DuffingParams:
    """
    Parameters of one Duffing oscillator in the coupled pair.

    Attributes:
        beta: Scaling parameter; beta -> 0 is the classical limit
        g: Drive amplitude
        gamma: Damping rate Gamma (Lindblad operator sqrt(2 Gamma) a)
        mu: Linear coupling q1 q2 between the oscillators
    """
    beta: float = 1.0
    g: float = 0.3
    gamma: float = 0.125
    mu: float = 0.2

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


@dataclass(frozen=True)
class SquidPhysicalParams:
    """
    Circuit parameters of one SQUID ring (RSJ model), SI units.

    Attributes:
        C: Capacitance (F)
        L: Ring inductance (H)
        R: Shunt resistance (ohm)
        I_c: Critical current of the weak link (A)
        I_d: Drive current amplitude (A)
        omega_d: Drive angular frequency (rad/s)
        Phi_x: Static external flux (Wb)
        a: Capacitance scale factor applied so far
        b: Inductance scale factor applied so far
    """
    C: float
    L: float
    R: float
    I_c: float
    I_d: float
    omega_d: float
    Phi_x: float
    a: float = 1.0
    b: float = 1.0


@dataclass(frozen=True)
class SquidDimensionlessParams:
    """
    Dimensionless RSJ groups, in units of hbar*omega0 and tau = omega0*t.

    Attributes:
        beta: 2 pi L I_c / Phi0
        zeta: 1 / (2 omega0 R C)
        omega: omega_d / omega0
        phi_d: I_d L / Phi0
        phi_x: Phi_x / Phi0
        Omega: [(4 e^2 / hbar) sqrt(L/C)]^(1/2), flux-to-position conversion
        omega0: 1/sqrt(LC) in rad/s
    """
    beta: float
    zeta: float
    omega: float
    phi_d: float
    phi_x: float
    Omega: float
    omega0: float

    @property
    def josephson_prefactor(self) -> float:
        """I_c / (2 e omega0), the Josephson energy in units of hbar*omega0."""
        return self.beta / self.Omega ** 2

    @property
    def drive_period(self) -> float:
        return 2.0 * math.pi / self.omega


@dataclass(frozen=True)
class EntropySample:
    """One recorded point of a trajectory: time, entropy (nats), leakage."""
    tau: float
    S: float
    leakage: float


@dataclass
class TrajectoryRecord:
    """
    Time series recorded along one stochastic trajectory.

    Attributes:
        seed: Run seed the noise stream was derived from
        trajectory_index: Index of the trajectory within the ensemble
        unravelling: 'qsd' or 'jumps'
        times: Recorded times (dimensionless)
        expectations: Observable name -> real expectation values at ``times``
        entropy: Entanglement entropy at ``times`` (empty for one mode)
        leakage: Top-level population at ``times``
        norm_drift: Largest |norm - 1| before renormalisation since the previous record
        jump_times: Times of quantum jumps (jumps unravelling only)
        jump_channels: Lindblad channel index of each jump
        valid: False when the trajectory was aborted
        abort_reason: Diagnostic of the abort (None when valid)
        final_state: State vector at the last step (optional)
    """
    seed: int
    trajectory_index: int
    unravelling: str
    times: np.ndarray
    expectations: Dict[str, np.ndarray]
    entropy: np.ndarray
    leakage: np.ndarray
    norm_drift: np.ndarray
    jump_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jump_channels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    valid: bool = True
    abort_reason: Optional[str] = None
    final_state: Optional[np.ndarray] = None

    @property
    def max_leakage(self) -> float:
        return float(np.max(self.leakage)) if len(self.leakage) else 0.0

    @property
    def jump_count(self) -> int:
        return int(len(self.jump_times))

    def entropy_samples(self) -> Iterator[EntropySample]:
        """Iterate (tau, S, leakage) samples."""
        for tau, s, leak in zip(self.times, self.entropy, self.leakage):
            yield EntropySample(float(tau), float(s), float(leak))

    def observable(self, name: str) -> np.ndarray:
        """Series of a recorded observable; 'entropy' maps to the entropy series."""
        if name == 'entropy':
            return self.entropy
        return self.expectations[name]

    def observable_names(self) -> List[str]:
        names = list(self.expectations)
        if len(self.entropy):
            names.append('entropy')
        return names

    def save(self, path: Path):
        """Save to a compressed ``.npz`` archive (bit-exact round trip)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {
            'seed': np.array(self.seed, dtype=np.uint64),
            'trajectory_index': np.array(self.trajectory_index, dtype=np.int64),
            'unravelling': np.array(self.unravelling),
            'times': self.times,
            'entropy': self.entropy,
            'leakage': self.leakage,
            'norm_drift': self.norm_drift,
            'jump_times': self.jump_times,
            'jump_channels': self.jump_channels,
            'valid': np.array(self.valid),
            'abort_reason': np.array(self.abort_reason or ''),
        }
        for name, values in self.expectations.items():
            arrays[f'obs__{name}'] = values
        if self.final_state is not None:
            arrays['final_state'] = self.final_state
        with open(path, 'wb') as f:
            np.savez_compressed(f, **arrays)

    @classmethod
    def load(cls, path: Path) -> 'TrajectoryRecord':
        """Load a record written by :meth:`save`."""
        with np.load(Path(path), allow_pickle=False) as data:
            expectations = {
                key[len('obs__'):]: data[key]
                for key in data.files if key.startswith('obs__')
            }
            abort_reason = str(data['abort_reason'])
            return cls(
                seed=int(data['seed']),
                trajectory_index=int(data['trajectory_index']),
                unravelling=str(data['unravelling']),
                times=data['times'],
                expectations=expectations,
                entropy=data['entropy'],
                leakage=data['leakage'],
                norm_drift=data['norm_drift'],
                jump_times=data['jump_times'],
                jump_channels=data['jump_channels'],
                valid=bool(data['valid']),
                abort_reason=abort_reason or None,
                final_state=data['final_state'] if 'final_state' in data.files else None,
            )

    def __repr__(self) -> str:
        return (
            f"TrajectoryRecord(index={self.trajectory_index}, "
            f"unravelling='{self.unravelling}', "
            f"points={len(self.times)}, "
            f"valid={self.valid})"
        )
