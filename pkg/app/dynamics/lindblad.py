"""
Deterministic Lindblad master-equation integrator.

The oracle both unravellings are checked against: fixed-step RK4 on the
dense density matrix, with sparse operator products.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from app.physics.hilbert import DimensionMismatchError
from app.physics.systems import SystemModel
from app.utils.integrators import rk4_step, step_count

logger = logging.getLogger(__name__)

MAX_DIMENSION = 4096
TRACE_DRIFT_LIMIT = 1e-6
TRACE_REPORT_THRESHOLD = 1e-10
DENSITY_TOLERANCE = 1e-8


class GuardRailError(Exception):
    """Joint dimension too large for dense density-matrix integration."""
    pass


class TraceDriftError(Exception):
    """Trace of rho drifted from 1 by more than 1e-6 between outputs."""
    pass


def density_matrix(psi: np.ndarray) -> np.ndarray:
    """|psi><psi|"""
    return np.outer(psi, psi.conj())


@dataclass
class MasterEquationRun:
    """
    One master-equation integration.

    Attributes:
        model: System model
        rho0: Initial density matrix
        t_span: (t0, t1) in model time units
        dt: RK4 step
        record_every: Steps between stored outputs
    """
    model: SystemModel
    rho0: np.ndarray
    t_span: Tuple[float, float]
    dt: float
    record_every: int = 1

    def __post_init__(self):
        dim = self.model.space.dim
        if dim > MAX_DIMENSION:
            raise GuardRailError(f"joint dimension {dim} exceeds {MAX_DIMENSION} for dense integration")
        if self.rho0.shape != (dim, dim):
            raise DimensionMismatchError(f"rho0 has shape {self.rho0.shape}, expected ({dim}, {dim})")
        if not np.allclose(self.rho0, self.rho0.conj().T, atol=DENSITY_TOLERANCE):
            raise ValueError("rho0 is not Hermitian")
        trace = np.trace(self.rho0).real
        if abs(trace - 1.0) > DENSITY_TOLERANCE:
            raise ValueError(f"rho0 has trace {trace!r}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")


@dataclass
class MasterEquationResult:
    """Density matrices at the recorded times, plus the largest trace correction applied."""
    times: np.ndarray
    states: np.ndarray
    max_trace_correction: float = 0.0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def expectation(self, op: sp.spmatrix) -> np.ndarray:
        """Real part of Tr(A rho) at every recorded time."""
        return np.array([np.trace(op @ rho).real for rho in self.states])

    def expectations(self, observables: Dict[str, sp.spmatrix]) -> Dict[str, np.ndarray]:
        return {name: self.expectation(op) for name, op in observables.items()}


def lindblad_rhs(rho: np.ndarray, model: SystemModel, tau: float) -> np.ndarray:
    """
    d rho / d tau = -i [H(tau), rho] + sum_j (L_j rho L_j^dag - {L_j^dag L_j, rho} / 2)

    Raises:
        DimensionMismatchError: If rho does not match the model space
    """
    dim = model.space.dim
    if rho.shape != (dim, dim):
        raise DimensionMismatchError(f"rho has shape {rho.shape}, expected ({dim}, {dim})")

    h_rho = model.apply_hamiltonian(tau, rho)
    # rho H = (H rho^dag)^dag for Hermitian H
    rho_h = model.apply_hamiltonian(tau, rho.conj().T).conj().T
    out = -1j * (h_rho - rho_h)
    for op, product in zip(model.lindblad_ops, model.lindblad_products):
        # L rho L^dag = (L (L rho)^dag)^dag
        out += (op @ (op @ rho).conj().T).conj().T
        out -= 0.5 * (product @ rho + (product @ rho.conj().T).conj().T)
    return out


def integrate_master(run: MasterEquationRun) -> MasterEquationResult:
    """
    Integrate the master equation with fixed-step RK4.

    Every stored output is re-Hermitized and renormalised to unit trace; the
    corrected matrix is also the starting point of the next step.

    Raises:
        GuardRailError: If the joint dimension exceeds 4096
        TraceDriftError: If the trace drifts by more than 1e-6 between outputs
    """
    model = run.model
    if model.space.dim > MAX_DIMENSION:
        raise GuardRailError(
            f"joint dimension {model.space.dim} exceeds {MAX_DIMENSION} for dense integration"
        )

    t0 = float(run.t_span[0])
    n_steps = step_count(run.t_span, run.dt)

    def rhs(tau, rho):
        return lindblad_rhs(rho, model, tau)

    rho = np.array(run.rho0, dtype=np.complex128, copy=True)
    times = [t0]
    states = [rho.copy()]
    worst = 0.0

    logger.info(f"Integrating master equation for {model.name}: dim={model.space.dim}, {n_steps} steps")
    for step in range(n_steps):
        rho = rk4_step(rhs, t0 + step * run.dt, rho, run.dt)
        if (step + 1) % run.record_every and step + 1 != n_steps:
            continue

        tau = t0 + (step + 1) * run.dt
        rho = 0.5 * (rho + rho.conj().T)
        trace = np.trace(rho).real
        deviation = abs(trace - 1.0)
        if deviation > TRACE_DRIFT_LIMIT:
            raise TraceDriftError(f"trace {trace!r} at tau={tau:.6g}; reduce dt")
        if deviation > TRACE_REPORT_THRESHOLD:
            logger.warning(f"Trace renormalised by {deviation:.2e} at tau={tau:.6g}")
        worst = max(worst, deviation)
        rho = rho / trace

        times.append(tau)
        states.append(rho.copy())

    return MasterEquationResult(times=np.array(times), states=np.array(states), max_trace_correction=worst)
