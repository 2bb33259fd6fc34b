"""
Hamiltonians and Lindblad operators of the driven, damped oscillator models.

A model is H(tau) = H_static + sum_k f_k(tau) H_k with time-independent sparse
parts, so stepping never reassembles a matrix. Energies are in units of
hbar*omega0 and time is dimensionless.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from app.models import DuffingParams, SquidPhysicalParams
from app.physics.circuit import DEFAULT_COUPLING, position_scale, squid_dimensionless
from app.physics.hilbert import (
    FockSpace,
    ModeIndexError,
    annihilation,
    cos_position,
    dagger,
    momentum,
    number,
    position,
    prune,
)

logger = logging.getLogger(__name__)

FRAMES = ('bias', 'lab')


# ============================================================================
# Drive signals (module-level so models pickle into worker processes)
# ============================================================================

@dataclass(frozen=True)
class SineSignal:
    """offset + amplitude * sin(omega * tau)"""
    amplitude: float
    omega: float
    offset: float = 0.0

    def __call__(self, tau: float) -> float:
        return self.offset + self.amplitude * math.sin(self.omega * tau)


@dataclass(frozen=True)
class CosineSignal:
    """amplitude * cos(omega * tau)"""
    amplitude: float
    omega: float

    def __call__(self, tau: float) -> float:
        return self.amplitude * math.cos(self.omega * tau)


@dataclass(frozen=True, eq=False)
class DriveTerm:
    operator: sp.csr_matrix
    signal: object


@dataclass(frozen=True, eq=False)
class SystemModel:
    """
    Time-dependent open-system model.

    Attributes:
        space: Fock space the operators act on
        static_hamiltonian: Time-independent part of H
        drive_terms: (operator, signal) pairs; H(tau) adds signal(tau) * operator
        lindblad_ops: Dissipation channels L_j
        drive_period: Period of the drive in model time units
        name: Label used in logs and output files
    """
    space: FockSpace
    static_hamiltonian: sp.csr_matrix
    drive_terms: Tuple[DriveTerm, ...] = ()
    lindblad_ops: Tuple[sp.csr_matrix, ...] = ()
    drive_period: float = 2.0 * math.pi
    name: str = 'model'

    def hamiltonian_at(self, tau: float) -> sp.csr_matrix:
        """Assemble H(tau)."""
        h = self.static_hamiltonian.copy()
        for term in self.drive_terms:
            h = h + term.signal(tau) * term.operator
        return prune(h)

    def apply_hamiltonian(self, tau: float, psi: np.ndarray) -> np.ndarray:
        """H(tau) @ psi without assembling H(tau)."""
        out = self.static_hamiltonian @ psi
        for term in self.drive_terms:
            out = out + term.signal(tau) * (term.operator @ psi)
        return out

    @cached_property
    def lindblad_daggers(self) -> Tuple[sp.csr_matrix, ...]:
        return tuple(dagger(op) for op in self.lindblad_ops)

    @cached_property
    def lindblad_products(self) -> Tuple[sp.csr_matrix, ...]:
        """L_j^dagger L_j for every channel."""
        return tuple(prune(ld @ op) for ld, op in zip(self.lindblad_daggers, self.lindblad_ops))

    @cached_property
    def decay_operator(self) -> sp.csr_matrix:
        """sum_j L_j^dagger L_j"""
        total = sp.csr_matrix((self.space.dim, self.space.dim), dtype=np.complex128)
        for product in self.lindblad_products:
            total = total + product
        return prune(total)


def _damping_correction(space: FockSpace, mode: int, rate: float) -> sp.csr_matrix:
    # (rate/2)(xp + px): with L = sqrt(2 rate) a gives net classical damping 2*rate on p
    x = position(space, mode)
    p = momentum(space, mode)
    return 0.5 * rate * (x @ p + p @ x)


def _require_two_modes(space: FockSpace, builder: str):
    if space.n_modes != 2:
        raise ModeIndexError(f"{builder} needs a two-mode space, got {space.n_modes} mode(s)")


# ============================================================================
# Duffing pair
# ============================================================================

def duffing_pair(params: DuffingParams, space: FockSpace) -> SystemModel:
    """
    Two coupled driven, damped Duffing oscillators.

    H(t) = sum_i [p_i^2/2 + (beta^2/4) q_i^4 - q_i^2/2 + (g/beta) cos(t) q_i
                  + (Gamma/2)(q_i p_i + p_i q_i)] + mu q_1 q_2,
    L_i = sqrt(2 Gamma) a_i.

    Args:
        params: Duffing parameters (beta, g, Gamma, mu)
        space: Two-mode Fock space

    Returns:
        SystemModel with drive period 2 pi
    """
    _require_two_modes(space, 'duffing_pair')

    static = sp.csr_matrix((space.dim, space.dim), dtype=np.complex128)
    drive_operator = sp.csr_matrix((space.dim, space.dim), dtype=np.complex128)
    lindblad = []
    for mode in range(2):
        q = position(space, mode)
        p = momentum(space, mode)
        q2 = q @ q
        static = static + 0.5 * (p @ p) + (params.beta ** 2 / 4.0) * (q2 @ q2) - 0.5 * q2
        static = static + _damping_correction(space, mode, params.gamma)
        drive_operator = drive_operator + q
        lindblad.append(prune(math.sqrt(2.0 * params.gamma) * annihilation(space, mode)))

    static = static + params.mu * (position(space, 0) @ position(space, 1))

    model = SystemModel(
        space=space,
        static_hamiltonian=prune(static),
        drive_terms=(DriveTerm(prune(drive_operator), CosineSignal(params.g / params.beta, 1.0)),),
        lindblad_ops=tuple(lindblad),
        drive_period=2.0 * math.pi,
        name=f'duffing_pair(beta={params.beta:g})',
    )
    logger.debug(f"Built {model.name} on N={space.n_levels}, dim={space.dim}")
    return model


# ============================================================================
# SQUID rings
# ============================================================================

def _squid_mode_terms(space: FockSpace, mode: int, phys: SquidPhysicalParams, frame: str):
    """Static Hamiltonian, drive operator and Lindblad operator of one ring."""
    d = squid_dimensionless(phys)
    x = position(space, mode)
    p = momentum(space, mode)
    phase = 2.0 * math.pi * d.phi_x if frame == 'bias' else 0.0

    static = 0.5 * (p @ p) + 0.5 * (x @ x)
    static = static - d.josephson_prefactor * cos_position(space, mode, d.Omega, phase)
    static = static + _damping_correction(space, mode, d.zeta)
    lindblad = prune(math.sqrt(2.0 * d.zeta) * annihilation(space, mode))
    return static, -x, lindblad


def _squid_signal(phys: SquidPhysicalParams, frame: str) -> SineSignal:
    d = squid_dimensionless(phys)
    scale = position_scale(d)
    offset = scale * d.phi_x if frame == 'lab' else 0.0
    return SineSignal(amplitude=scale * d.phi_d, omega=d.omega, offset=offset)


def _check_frame(frame: str):
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}, got '{frame}'")


def squid_ring(phys: SquidPhysicalParams, space: FockSpace, frame: str = 'bias') -> SystemModel:
    """
    A single driven SQUID ring on a one-mode space.

    See :func:`squid_pair` for the Hamiltonian and the meaning of ``frame``.
    """
    _check_frame(frame)
    if space.n_modes != 1:
        raise ModeIndexError("squid_ring needs a one-mode space")
    d = squid_dimensionless(phys)
    static, drive_operator, lindblad = _squid_mode_terms(space, 0, phys, frame)
    return SystemModel(
        space=space,
        static_hamiltonian=prune(static),
        drive_terms=(DriveTerm(prune(drive_operator), _squid_signal(phys, frame)),),
        lindblad_ops=(lindblad,),
        drive_period=d.drive_period,
        name=f'squid_ring(C={phys.C:.3g})',
    )


def squid_pair(phys: SquidPhysicalParams, space: FockSpace, mu: float = DEFAULT_COUPLING,
               frame: str = 'bias') -> SystemModel:
    """
    Two identical coupled SQUID rings.

    H'(tau) = sum_i { p_i^2/2 + [x_i - x(tau)]^2/2 - (I_c/2e omega0) cos(Omega x_i)
                      + (zeta/2)(p_i x_i + x_i p_i) } + mu x_1 x_2,
    L_i = sqrt(2 zeta) a_i, with x(tau) the drive flux in oscillator units.
    The c-number x(tau)^2/2 only contributes a global phase and is dropped.

    frame='lab' builds this literally. frame='bias' measures each position from
    the static bias X0 = 2 pi phi_x / Omega: the cosine becomes
    cos(Omega y + 2 pi phi_x), the drive keeps only its oscillating part, the
    coupling gains mu X0 (y_1 + y_2), and a_i is the displaced mode. The
    zeta X0 p term of the damping correction cancels against the shift of
    a_i, so both frames share the same master equation. They are not the same
    unravelling for jumps: in the bias frame the jump record counts quanta of
    the displaced mode, so jump trajectories differ from the lab frame even
    though their ensemble average agrees.

    Args:
        phys: Physical ring parameters (dimensionless groups derived here)
        space: Two-mode Fock space
        mu: Coupling constant in units of hbar*omega0
        frame: 'bias' (default) or 'lab'

    Returns:
        SystemModel with drive period 2 pi / omega
    """
    _check_frame(frame)
    _require_two_modes(space, 'squid_pair')
    d = squid_dimensionless(phys)

    static = sp.csr_matrix((space.dim, space.dim), dtype=np.complex128)
    drive_operator = sp.csr_matrix((space.dim, space.dim), dtype=np.complex128)
    lindblad = []
    for mode in range(2):
        mode_static, mode_drive, mode_lindblad = _squid_mode_terms(space, mode, phys, frame)
        static = static + mode_static
        drive_operator = drive_operator + mode_drive
        lindblad.append(mode_lindblad)

    x0 = position(space, 0)
    x1 = position(space, 1)
    static = static + mu * (x0 @ x1)
    if frame == 'bias':
        bias = position_scale(d) * d.phi_x
        static = static + mu * bias * (x0 + x1)

    model = SystemModel(
        space=space,
        static_hamiltonian=prune(static),
        drive_terms=(DriveTerm(prune(drive_operator), _squid_signal(phys, frame)),),
        lindblad_ops=tuple(lindblad),
        drive_period=d.drive_period,
        name=f'squid_pair(C={phys.C:.3g})',
    )
    logger.debug(
        f"Built {model.name}: Omega={d.Omega:.4f}, zeta={d.zeta:.4f}, "
        f"E_J={d.josephson_prefactor:.3f}, frame={frame}, dim={space.dim}"
    )
    return model


# ============================================================================
# Single damped mode (oracle test model)
# ============================================================================

def damped_mode(space: FockSpace, zeta: float, drive_amplitude: float = 0.0,
                drive_frequency: float = 1.0, kerr: float = 0.0,
                damping_correction: bool = True) -> SystemModel:
    """
    One driven, damped harmonic mode.

    H = p^2/2 + x^2/2 + kerr (a^dagger a)^2 [+ (zeta/2)(xp + px)]
        - drive_amplitude cos(drive_frequency tau) x,
    L = sqrt(2 zeta) a.
    """
    if space.n_modes != 1:
        raise ModeIndexError("damped_mode needs a one-mode space")
    if zeta < 0:
        raise ValueError(f"zeta must be non-negative, got {zeta}")

    x = position(space, 0)
    p = momentum(space, 0)
    n = number(space, 0)
    static = 0.5 * (p @ p) + 0.5 * (x @ x) + kerr * (n @ n)
    if damping_correction:
        static = static + _damping_correction(space, 0, zeta)

    drive_terms = ()
    if drive_amplitude:
        drive_terms = (DriveTerm(prune(-x), CosineSignal(drive_amplitude, drive_frequency)),)

    return SystemModel(
        space=space,
        static_hamiltonian=prune(static),
        drive_terms=drive_terms,
        lindblad_ops=(prune(math.sqrt(2.0 * zeta) * annihilation(space, 0)),),
        drive_period=2.0 * math.pi / drive_frequency,
        name=f'damped_mode(zeta={zeta:g})',
    )


def default_observables(space: FockSpace) -> Dict[str, sp.csr_matrix]:
    """Position, momentum and occupation of every mode, keyed x0, p0, n0, ..."""
    observables = {}
    for mode in range(space.n_modes):
        observables[f'x{mode}'] = position(space, mode)
        observables[f'p{mode}'] = momentum(space, mode)
        observables[f'n{mode}'] = number(space, mode)
    return observables
