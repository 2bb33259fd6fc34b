"""
Classical reference dynamics: the RSJ equation of a driven SQUID ring and
Hamilton's equations of the Duffing pair.

State vectors are laid out as [coordinates..., momenta...]; right-hand sides
are module-level functions bound with functools.partial so trajectories can
be re-integrated (Lyapunov estimates) and pickled.
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from app.dynamics.stochastic import NonFiniteStateError
from app.models import DuffingParams, SquidDimensionlessParams
from app.utils.integrators import rk4

logger = logging.getLogger(__name__)

MIN_STEPS_PER_PERIOD = 200


class ResolutionError(ValueError):
    """dt does not resolve the drive (fewer than 200 steps per period)."""
    pass


@dataclass(frozen=True)
class ClassicalState:
    """
    Point in classical phase space.

    Attributes:
        q: Coordinates (phi for a ring, (q1, q2) for the Duffing pair)
        p: Conjugate velocities/momenta
        tau: Dimensionless time
    """
    q: Tuple[float, ...]
    p: Tuple[float, ...]
    tau: float = 0.0

    def __post_init__(self):
        if len(self.q) != len(self.p):
            raise ValueError(f"{len(self.q)} coordinates but {len(self.p)} momenta")
        if not all(math.isfinite(v) for v in (*self.q, *self.p, self.tau)):
            raise NonFiniteStateError(f"non-finite classical state {self}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([*self.q, *self.p], dtype=float)

    @classmethod
    def from_vector(cls, y: Sequence[float], tau: float = 0.0) -> 'ClassicalState':
        half = len(y) // 2
        return cls(q=tuple(float(v) for v in y[:half]), p=tuple(float(v) for v in y[half:]), tau=float(tau))

    def coherent_amplitudes(self) -> Tuple[complex, ...]:
        """alpha = (q + i p)/sqrt(2) per mode, matching x = (a + a^dagger)/sqrt(2)."""
        return tuple(complex(q, p) / math.sqrt(2.0) for q, p in zip(self.q, self.p))


@dataclass
class ClassicalTrajectory:
    """
    Fixed-step classical trajectory.

    Attributes:
        times: Sample times
        states: (n_samples, 2 * n_dof) array of [q..., p...]
        rhs: Right-hand side f(t, y) the trajectory was integrated with
        dt: Integration step
        drive_period: Drive period in the same time units
        labels: Coordinate names, used for export
    """
    times: np.ndarray
    states: np.ndarray
    rhs: Callable[[float, np.ndarray], np.ndarray]
    dt: float
    drive_period: float
    labels: Tuple[str, ...] = ()

    @property
    def n_dof(self) -> int:
        return self.states.shape[1] // 2

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :self.n_dof]

    @property
    def momenta(self) -> np.ndarray:
        return self.states[:, self.n_dof:]

    def final_state(self) -> ClassicalState:
        return ClassicalState.from_vector(self.states[-1], self.times[-1])

    def series(self) -> Dict[str, np.ndarray]:
        """Coordinate name -> time series, for the CSV writer."""
        labels = self.labels or tuple(f'y{i}' for i in range(self.states.shape[1]))
        return {label: self.states[:, i] for i, label in enumerate(labels)}


def _check_resolution(dt: float, drive_period: float):
    if drive_period / dt < MIN_STEPS_PER_PERIOD * (1.0 - 1e-9):
        raise ResolutionError(
            f"dt={dt:g} gives {drive_period / dt:.1f} steps per drive period; "
            f"at least {MIN_STEPS_PER_PERIOD} required"
        )


def _require_finite(t: float, y: np.ndarray):
    if not np.all(np.isfinite(y)):
        raise NonFiniteStateError(f"classical state became non-finite at t={t:.6g}")


# ============================================================================
# RSJ ring
# ============================================================================

def _rsj_force(phi, dphi, tau, params: SquidDimensionlessParams):
    josephson = (params.beta / (2.0 * math.pi)) * np.sin(2.0 * math.pi * (phi + params.phi_x))
    drive = params.phi_d * math.sin(params.omega * tau)
    return -2.0 * params.zeta * dphi - phi - josephson + drive


def rsj_rhs(state: ClassicalState, params: SquidDimensionlessParams) -> np.ndarray:
    """
    RSJ equation of motion as a first-order system.

    phi'' = -2 zeta phi' - phi - (beta / 2 pi) sin[2 pi (phi + phi_x)] + phi_d sin(omega tau)

    Returns:
        [phi', phi'']
    """
    phi, dphi = state.q[0], state.p[0]
    return np.array([dphi, _rsj_force(phi, dphi, state.tau, params)])


def _rsj_vector_rhs(tau: float, y: np.ndarray, params: SquidDimensionlessParams) -> np.ndarray:
    return np.array([y[1], _rsj_force(y[0], y[1], tau, params)])


def integrate_rsj(state0: ClassicalState, params: SquidDimensionlessParams,
                  t_span: Tuple[float, float], dt: float, record_every: int = 1) -> ClassicalTrajectory:
    """
    Integrate the RSJ equation with fixed-step RK4.

    Args:
        state0: Initial (phi, phi'); its tau is ignored in favour of t_span[0]
        params: Dimensionless ring parameters
        t_span: (tau0, tau1)
        dt: Step, at most drive_period / 200
        record_every: Steps between samples

    Raises:
        ResolutionError: If dt does not resolve the drive
        NonFiniteStateError: If the solution blows up
    """
    _check_resolution(dt, params.drive_period)
    rhs = partial(_rsj_vector_rhs, params=params)
    times, states = rk4(rhs, state0.vector, t_span, dt, record_every, validate=_require_finite)
    return ClassicalTrajectory(times, states, rhs, dt, params.drive_period, labels=('phi', 'dphi'))


def _rsj_pair_vector_rhs(tau: float, y: np.ndarray, params: SquidDimensionlessParams, mu: float) -> np.ndarray:
    phi1, phi2, v1, v2 = y
    # mu x1 x2 in units of the flux quantum; positions measured from the static bias
    f1 = _rsj_force(phi1, v1, tau, params) - mu * (phi2 + params.phi_x)
    f2 = _rsj_force(phi2, v2, tau, params) - mu * (phi1 + params.phi_x)
    return np.array([v1, v2, f1, f2])


def rsj_pair_rhs(state: ClassicalState, params: SquidDimensionlessParams, mu: float) -> np.ndarray:
    """Two rings coupled through mu x1 x2; returns [phi1', phi2', phi1'', phi2'']."""
    return _rsj_pair_vector_rhs(state.tau, state.vector, params, mu)


def integrate_rsj_pair(state0: ClassicalState, params: SquidDimensionlessParams, mu: float,
                       t_span: Tuple[float, float], dt: float, record_every: int = 1) -> ClassicalTrajectory:
    """Classical counterpart of the coupled SQUID pair."""
    _check_resolution(dt, params.drive_period)
    rhs = partial(_rsj_pair_vector_rhs, params=params, mu=mu)
    times, states = rk4(rhs, state0.vector, t_span, dt, record_every, validate=_require_finite)
    return ClassicalTrajectory(times, states, rhs, dt, params.drive_period,
                               labels=('phi1', 'phi2', 'dphi1', 'dphi2'))


# ============================================================================
# Duffing pair
# ============================================================================

def _duffing_vector_rhs(t: float, y: np.ndarray, params: DuffingParams, dissipative: bool) -> np.ndarray:
    q = y[:2]
    p = y[2:]
    gamma = params.gamma
    force = -params.beta ** 2 * q ** 3 + q - (params.g / params.beta) * math.cos(t) - params.mu * q[::-1]
    dq = p + gamma * q
    dp = force - gamma * p
    if dissipative:
        # Lindblad damping contributes -gamma q and -gamma p
        dq = dq - gamma * q
        dp = dp - gamma * p
    return np.concatenate([dq, dp])


def duffing_classical_rhs(state: ClassicalState, params: DuffingParams, dissipative: bool = False) -> np.ndarray:
    """
    Hamilton's equations of the Duffing pair including the (Gamma/2)(qp + pq) term.

    q_i' = p_i + Gamma q_i
    p_i' = -beta^2 q_i^3 + q_i - (g/beta) cos(t) - Gamma p_i - mu q_(3-i)

    With ``dissipative=True`` the damping generated by the Lindblad operators
    is added (-Gamma q_i, -Gamma p_i), giving the net classical motion
    q'' + 2 Gamma q' + beta^2 q^3 - q + mu q_other = -(g/beta) cos t.

    Returns:
        [q1', q2', p1', p2']
    """
    return _duffing_vector_rhs(state.tau, state.vector, params, dissipative)


def integrate_duffing(state0: ClassicalState, params: DuffingParams, t_span: Tuple[float, float],
                      dt: float, record_every: int = 1, dissipative: bool = True) -> ClassicalTrajectory:
    """
    Integrate the classical Duffing pair with fixed-step RK4.

    Defaults to the dissipative (correspondence-limit) motion; pass
    ``dissipative=False`` for the bare Hamilton equations.
    """
    drive_period = 2.0 * math.pi
    _check_resolution(dt, drive_period)
    rhs = partial(_duffing_vector_rhs, params=params, dissipative=dissipative)
    times, states = rk4(rhs, state0.vector, t_span, dt, record_every, validate=_require_finite)
    return ClassicalTrajectory(times, states, rhs, dt, drive_period, labels=('q1', 'q2', 'p1', 'p2'))


def duffing_energy(state: ClassicalState, params: DuffingParams) -> float:
    """Conservative energy sum_i [p^2/2 + beta^2 q^4/4 - q^2/2] + mu q1 q2 (undriven, undamped)."""
    q = np.array(state.q)
    p = np.array(state.p)
    single = 0.5 * p ** 2 + 0.25 * params.beta ** 2 * q ** 4 - 0.5 * q ** 2
    return float(single.sum() + params.mu * q[0] * q[1])


def rsj_energy(state: ClassicalState, params: SquidDimensionlessParams) -> float:
    """phi'^2/2 + phi^2/2 - (beta / 4 pi^2) cos[2 pi (phi + phi_x)], the undriven ring energy."""
    phi, dphi = state.q[0], state.p[0]
    josephson = (params.beta / (4.0 * math.pi ** 2)) * math.cos(2.0 * math.pi * (phi + params.phi_x))
    return 0.5 * dphi ** 2 + 0.5 * phi ** 2 - josephson
