"""
SQUID circuit parameters: physical -> dimensionless mapping and the
quantum-classical scaling ledger.

Scaling C -> aC, L -> bL together with R -> sqrt(b/a) R, I_d -> I_d / b,
omega_d -> omega_d / sqrt(ab) and I_c -> I_c / b leaves beta, zeta, omega,
phi_d and phi_x unchanged while Omega changes by (b/a)^(1/4). Large C is the
correspondence limit.
"""

import logging
import math
from dataclasses import replace

from app.models import SquidDimensionlessParams, SquidPhysicalParams
from app.physics.constants import ELEMENTARY_CHARGE, FLUX_QUANTUM, HBAR

logger = logging.getLogger(__name__)

# Base ring: C = 1e-13 F, L = 3e-10 H, R = 100 ohm, beta = 2,
# omega_d = omega0, Phi_x = 0.5 Phi0, I_d = 0.9 uA
BASE_CAPACITANCE = 1e-13
BASE_INDUCTANCE = 3e-10
BASE_RESISTANCE = 100.0
BASE_BETA = 2.0
BASE_DRIVE_CURRENT = 0.9e-6
BASE_FLUX_BIAS = 0.5          # in units of Phi0
DEFAULT_COUPLING = 0.2


class ParameterError(ValueError):
    """Raised for non-positive circuit values or scale factors."""
    pass


def critical_current_for_beta(beta: float, L: float) -> float:
    """Invert beta = 2 pi L I_c / Phi0."""
    return beta * FLUX_QUANTUM / (2.0 * math.pi * L)


def base_squid_params() -> SquidPhysicalParams:
    """The unscaled ring the capacitance sweep starts from."""
    omega0 = 1.0 / math.sqrt(BASE_INDUCTANCE * BASE_CAPACITANCE)
    return SquidPhysicalParams(
        C=BASE_CAPACITANCE,
        L=BASE_INDUCTANCE,
        R=BASE_RESISTANCE,
        I_c=critical_current_for_beta(BASE_BETA, BASE_INDUCTANCE),
        I_d=BASE_DRIVE_CURRENT,
        omega_d=omega0,
        Phi_x=BASE_FLUX_BIAS * FLUX_QUANTUM,
    )


def _check_positive(**values: float):
    for name, value in values.items():
        if not value > 0:
            raise ParameterError(f"{name} must be positive, got {value!r}")


def squid_dimensionless(phys: SquidPhysicalParams) -> SquidDimensionlessParams:
    """
    Compute the dimensionless RSJ groups of a ring.

    Args:
        phys: Physical circuit parameters

    Returns:
        SquidDimensionlessParams

    Raises:
        ParameterError: If C, L, R or I_c is not positive
    """
    _check_positive(C=phys.C, L=phys.L, R=phys.R, I_c=phys.I_c)

    omega0 = 1.0 / math.sqrt(phys.L * phys.C)
    return SquidDimensionlessParams(
        beta=2.0 * math.pi * phys.L * phys.I_c / FLUX_QUANTUM,
        zeta=1.0 / (2.0 * omega0 * phys.R * phys.C),
        omega=phys.omega_d / omega0,
        phi_d=phys.I_d * phys.L / FLUX_QUANTUM,
        phi_x=phys.Phi_x / FLUX_QUANTUM,
        Omega=math.sqrt((4.0 * ELEMENTARY_CHARGE ** 2 / HBAR) * math.sqrt(phys.L / phys.C)),
        omega0=omega0,
    )


def apply_scaling(phys: SquidPhysicalParams, a: float, b: float) -> SquidPhysicalParams:
    """
    Move a ring along the quantum-classical crossover.

    C -> aC, L -> bL, R -> sqrt(b/a) R,
    omega_d -> omega_d/sqrt(ab), I_c -> I_c/b and I_d -> I_d/b (beta and
    phi_d held fixed; for b = 1 the drive rule coincides with I_d/sqrt(b)).
    The factors accumulate into the returned record's ``a`` and ``b``.

    Raises:
        ParameterError: If a or b is not positive
    """
    _check_positive(a=a, b=b)
    scaled = replace(
        phys,
        C=phys.C * a,
        L=phys.L * b,
        R=phys.R * math.sqrt(b / a),
        I_c=phys.I_c / b,
        I_d=phys.I_d / b,
        omega_d=phys.omega_d / math.sqrt(a * b),
        a=phys.a * a,
        b=phys.b * b,
    )
    logger.debug(f"Scaled ring by a={a:g}, b={b:g}: C={scaled.C:.3e} F, L={scaled.L:.3e} H")
    return scaled


def scale_to_capacitance(phys: SquidPhysicalParams, capacitance: float) -> SquidPhysicalParams:
    """Scale with b = 1 so that the ring has the requested capacitance."""
    _check_positive(capacitance=capacitance)
    return apply_scaling(phys, capacitance / phys.C, 1.0)


def position_scale(dimensionless: SquidDimensionlessParams) -> float:
    """sqrt(C omega0 / hbar) * Phi0 = 2 pi / Omega: one flux quantum in oscillator units."""
    return 2.0 * math.pi / dimensionless.Omega


def drive_flux(dimensionless: SquidDimensionlessParams, tau: float) -> float:
    """
    Time-dependent external flux x(tau) in oscillator units.

    x(tau) = sqrt(C omega0 / hbar) Phi0 [phi_x + phi_d sin(omega tau)];
    the drive current enters through the flux, Phi_x(t) = Phi_x + L I_d sin(omega_d t).
    """
    return position_scale(dimensionless) * (
        dimensionless.phi_x + dimensionless.phi_d * math.sin(dimensionless.omega * tau)
    )


def position_to_flux(x: float, dimensionless: SquidDimensionlessParams, frame: str = 'bias') -> float:
    """
    Convert a position expectation value to the RSJ coordinate phi = (Phi - Phi_x)/Phi0.

    In the 'bias' frame positions are already measured from the static bias.
    """
    phi = x / position_scale(dimensionless)
    if frame == 'lab':
        phi -= dimensionless.phi_x
    return phi


def flux_to_position(phi: float, dimensionless: SquidDimensionlessParams, frame: str = 'bias') -> float:
    """Inverse of :func:`position_to_flux`."""
    if frame == 'lab':
        phi = phi + dimensionless.phi_x
    return phi * position_scale(dimensionless)
