"""
Expectation values, von Neumann entropy and density-matrix distances.
"""

import logging
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from app.physics.hilbert import DimensionMismatchError, FockSpace, ModeIndexError, partial_trace

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-12
NEGATIVE_EIGENVALUE_LIMIT = -1e-8


class NumericalValidityError(ArithmeticError):
    """Raised when a density matrix has an eigenvalue below -1e-8."""
    pass


def expectation(psi: np.ndarray, op: sp.spmatrix) -> complex:
    """<psi|A|psi>"""
    if op.shape != (psi.shape[0], psi.shape[0]):
        raise DimensionMismatchError(f"operator {op.shape} does not act on state of length {psi.shape[0]}")
    return complex(np.vdot(psi, op @ psi))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """
    S = -Tr[rho ln rho] in nats.

    Eigenvalues below 1e-12 contribute nothing; small negative eigenvalues are
    clamped to zero, anything below -1e-8 is treated as corruption.

    Raises:
        NumericalValidityError: If an eigenvalue is below -1e-8
    """
    eigenvalues = np.linalg.eigvalsh(rho)
    lowest = float(eigenvalues.min())
    if lowest < NEGATIVE_EIGENVALUE_LIMIT:
        raise NumericalValidityError(f"density matrix has eigenvalue {lowest:.3e}")
    kept = eigenvalues[eigenvalues > EIGENVALUE_FLOOR]
    return float(max(0.0, -np.sum(kept * np.log(kept))))


def entanglement_entropy(psi: np.ndarray, space: FockSpace, keep: int = 0) -> float:
    """
    Entropy of entanglement of a pure two-mode state, in nats.

    Args:
        psi: Normalized joint state
        space: Two-mode Fock space
        keep: Mode whose reduced density matrix is diagonalised

    Returns:
        S(rho_keep), between 0 and ln N
    """
    if space.n_modes != 2:
        raise ModeIndexError("entanglement entropy needs a two-mode space")
    return von_neumann_entropy(partial_trace(psi, space, keep))


def schmidt_coefficients(psi: np.ndarray, space: FockSpace) -> np.ndarray:
    """Singular values of the N x N coefficient matrix, descending."""
    if space.n_modes != 2:
        raise ModeIndexError("Schmidt decomposition needs a two-mode space")
    return np.linalg.svd(psi.reshape(space.n_levels, space.n_levels), compute_uv=False)


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """D = (1/2) sum |eig(rho - sigma)|"""
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def ensemble_density_matrix(states: Iterable[np.ndarray]) -> np.ndarray:
    """Mean of |psi><psi| over an ensemble of pure states."""
    rho = None
    count = 0
    for psi in states:
        outer = np.outer(psi, psi.conj())
        rho = outer if rho is None else rho + outer
        count += 1
    if count == 0:
        raise ValueError("empty ensemble")
    return rho / count
