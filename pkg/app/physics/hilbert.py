"""
Truncated Fock-space operators for one or two bosonic modes.

Operators are complex ``scipy.sparse.csr_matrix`` instances, states are 1-D
complex ``numpy`` arrays and reduced density matrices are dense 2-D arrays.
Mode 0 is the leftmost tensor factor, so basis index = n0 * N + n1.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

logger = logging.getLogger(__name__)

DROP_TOLERANCE = 1e-15
HERMITIAN_TOLERANCE = 1e-12
NORM_TOLERANCE = 1e-10


class ModeIndexError(ValueError):
    """Raised when an operator is requested on a mode the space does not have."""
    pass


class DimensionMismatchError(ValueError):
    """Raised when a state or operator does not match the space dimension."""
    pass


@dataclass(frozen=True)
class FockSpace:
    """
    Truncated Fock space of one or two identical modes.

    Attributes:
        n_levels: Truncation dimension N per mode (levels 0..N-1)
        n_modes: Number of modes (1 or 2)
    """
    n_levels: int
    n_modes: int = 1

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError(f"n_levels must be >= 2, got {self.n_levels}")
        if self.n_modes not in (1, 2):
            raise ValueError(f"n_modes must be 1 or 2, got {self.n_modes}")

    @property
    def dim(self) -> int:
        """Joint Hilbert-space dimension N**n_modes."""
        return self.n_levels ** self.n_modes

    def check_mode(self, mode: int):
        if not 0 <= mode < self.n_modes:
            raise ModeIndexError(f"mode {mode} out of range for {self.n_modes}-mode space")

    def embed(self, single: sp.spmatrix, mode: int) -> sp.csr_matrix:
        """
        Embed a single-mode operator on ``mode`` by tensoring with identities.

        Args:
            single: N x N operator acting on one mode
            mode: Target mode index

        Returns:
            Joint-space operator in CSR format
        """
        self.check_mode(mode)
        if single.shape != (self.n_levels, self.n_levels):
            raise DimensionMismatchError(
                f"single-mode operator has shape {single.shape}, expected "
                f"({self.n_levels}, {self.n_levels})"
            )
        if self.n_modes == 1:
            return prune(sp.csr_matrix(single, dtype=np.complex128))

        eye = sp.identity(self.n_levels, dtype=np.complex128, format='csr')
        factors = [eye] * self.n_modes
        factors[mode] = sp.csr_matrix(single, dtype=np.complex128)
        joint = factors[0]
        for factor in factors[1:]:
            joint = sp.kron(joint, factor, format='csr')
        return prune(joint)

    def identity(self) -> sp.csr_matrix:
        return sp.identity(self.dim, dtype=np.complex128, format='csr')


# ============================================================================
# Sparse helpers
# ============================================================================

def prune(op: sp.spmatrix, tol: float = DROP_TOLERANCE) -> sp.csr_matrix:
    """Return a CSR copy with entries of magnitude <= tol removed."""
    op = sp.csr_matrix(op, dtype=np.complex128, copy=True)
    op.data[np.abs(op.data) <= tol] = 0.0
    op.eliminate_zeros()
    op.sort_indices()
    return op


def dagger(op: sp.spmatrix) -> sp.csr_matrix:
    """Conjugate transpose in CSR format."""
    return sp.csr_matrix(op.conj().T)


def is_hermitian(op: sp.spmatrix, atol: float = HERMITIAN_TOLERANCE) -> bool:
    """Elementwise check of A == A^dagger within ``atol``."""
    diff = sp.csr_matrix(op - dagger(op))
    if diff.nnz == 0:
        return True
    return bool(np.max(np.abs(diff.data)) < atol)


def commutator(a: sp.spmatrix, b: sp.spmatrix) -> sp.csr_matrix:
    return sp.csr_matrix(a @ b - b @ a)


# ============================================================================
# Single-mode building blocks
# ============================================================================

@lru_cache(maxsize=32)
def _single_annihilation(n_levels: int) -> sp.csr_matrix:
    # <n-1|a|n> = sqrt(n)
    return sp.diags(np.sqrt(np.arange(1, n_levels)), offsets=1,
                    shape=(n_levels, n_levels), dtype=np.complex128, format='csr')


def _single_position(n_levels: int) -> sp.csr_matrix:
    a = _single_annihilation(n_levels)
    return sp.csr_matrix((a + dagger(a)) / np.sqrt(2.0))


# ============================================================================
# Operators on a FockSpace
# ============================================================================

def annihilation(space: FockSpace, mode: int = 0) -> sp.csr_matrix:
    """Annihilation operator a on ``mode``."""
    space.check_mode(mode)
    return space.embed(_single_annihilation(space.n_levels), mode)


def creation(space: FockSpace, mode: int = 0) -> sp.csr_matrix:
    """Creation operator a^dagger on ``mode``."""
    return dagger(annihilation(space, mode))


def number(space: FockSpace, mode: int = 0) -> sp.csr_matrix:
    """Number operator a^dagger a on ``mode``."""
    a = annihilation(space, mode)
    return prune(dagger(a) @ a)


def position(space: FockSpace, mode: int = 0) -> sp.csr_matrix:
    """Quadrature x = (a + a^dagger)/sqrt(2), so that p^2/2 + x^2/2 = a^dagger a + 1/2."""
    a = annihilation(space, mode)
    return prune((a + dagger(a)) / np.sqrt(2.0))


def momentum(space: FockSpace, mode: int = 0) -> sp.csr_matrix:
    """Quadrature p = i(a^dagger - a)/sqrt(2)."""
    a = annihilation(space, mode)
    return prune(1j * (dagger(a) - a) / np.sqrt(2.0))


def function_of_position(space: FockSpace, mode: int,
                         func: Callable[[np.ndarray], np.ndarray]) -> sp.csr_matrix:
    """
    Apply a real scalar function to the truncated position operator.

    The single-mode x is diagonalised (Hermitian eigendecomposition), ``func``
    is applied to its eigenvalues and the result rotated back, then embedded.

    Args:
        space: Target Fock space
        mode: Mode index
        func: Vectorised real function of the eigenvalues

    Returns:
        Hermitian joint-space operator
    """
    space.check_mode(mode)
    x = _single_position(space.n_levels).toarray()
    eigenvalues, vectors = np.linalg.eigh(x)
    single = (vectors * func(eigenvalues)) @ vectors.conj().T
    # Symmetrise away rounding so the Hermitian flag holds exactly
    single = 0.5 * (single + single.conj().T)
    return space.embed(sp.csr_matrix(single), mode)


def cos_position(space: FockSpace, mode: int, omega: float, phase: float = 0.0) -> sp.csr_matrix:
    """
    cos(omega * x + phase) on ``mode``.

    With phase = 0 this is (exp(i omega x) + exp(-i omega x)) / 2 evaluated
    exactly for the truncated x.
    """
    omega = float(omega)
    phase = float(phase)
    return function_of_position(space, mode, lambda lam: np.cos(omega * lam + phase))


def sin_position(space: FockSpace, mode: int, omega: float, phase: float = 0.0) -> sp.csr_matrix:
    """sin(omega * x + phase) on ``mode``."""
    omega = float(omega)
    phase = float(phase)
    return function_of_position(space, mode, lambda lam: np.sin(omega * lam + phase))


# ============================================================================
# States
# ============================================================================

def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError(f"cannot normalize state with norm {norm}")
    return psi / norm


def check_state(psi: np.ndarray, space: FockSpace, tol: float = NORM_TOLERANCE):
    """Raise if ``psi`` has the wrong dimension or is not normalized."""
    if psi.shape != (space.dim,):
        raise DimensionMismatchError(f"state has shape {psi.shape}, expected ({space.dim},)")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized: |psi| = {norm!r}")


def fock_state(space: FockSpace, levels: Sequence[int]) -> np.ndarray:
    """Product Fock state |n0> (x) |n1> ..."""
    if len(levels) != space.n_modes:
        raise DimensionMismatchError(f"expected {space.n_modes} occupation numbers, got {len(levels)}")
    index = 0
    for n in levels:
        if not 0 <= n < space.n_levels:
            raise ValueError(f"level {n} outside truncation 0..{space.n_levels - 1}")
        index = index * space.n_levels + int(n)
    psi = np.zeros(space.dim, dtype=np.complex128)
    psi[index] = 1.0
    return psi


def _single_coherent(n_levels: int, alpha: complex) -> np.ndarray:
    n = np.arange(n_levels)
    if alpha == 0:
        amplitudes = np.zeros(n_levels, dtype=np.complex128)
        amplitudes[0] = 1.0
        return amplitudes
    log_magnitude = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
    return np.exp(log_magnitude) * np.exp(1j * n * np.angle(alpha))


def coherent_state(space: FockSpace, alphas: Sequence[complex]) -> np.ndarray:
    """
    Product coherent state |alpha_0> (x) |alpha_1>, renormalized after truncation.

    Args:
        space: Fock space
        alphas: One complex amplitude per mode

    Returns:
        Normalized state vector
    """
    if len(alphas) != space.n_modes:
        raise DimensionMismatchError(f"expected {space.n_modes} amplitudes, got {len(alphas)}")
    psi = np.ones(1, dtype=np.complex128)
    for alpha in alphas:
        psi = np.kron(psi, _single_coherent(space.n_levels, complex(alpha)))
    return normalize(psi)


# ============================================================================
# Reduced states
# ============================================================================

def partial_trace(psi: np.ndarray, space: FockSpace, keep: int = 0) -> np.ndarray:
    """
    Reduced density matrix of mode ``keep`` for a pure two-mode state.

    Args:
        psi: Normalized joint state
        space: Two-mode Fock space
        keep: Mode to keep (0 or 1)

    Returns:
        Dense N x N Hermitian density matrix with unit trace
    """
    if space.n_modes != 2:
        raise ModeIndexError("partial_trace needs a two-mode space")
    space.check_mode(keep)
    if psi.shape != (space.dim,):
        raise DimensionMismatchError(f"state has shape {psi.shape}, expected ({space.dim},)")

    m = psi.reshape(space.n_levels, space.n_levels)
    if keep == 0:
        rho = m @ m.conj().T
    else:
        rho = m.T @ m.conj()
    return 0.5 * (rho + rho.conj().T)


def mode_populations(psi: np.ndarray, space: FockSpace, mode: int) -> np.ndarray:
    """Occupation probabilities P(n) of one mode."""
    space.check_mode(mode)
    probabilities = np.abs(psi) ** 2
    if space.n_modes == 1:
        return probabilities
    grid = probabilities.reshape(space.n_levels, space.n_levels)
    return grid.sum(axis=1 - mode)


def leakage(psi: np.ndarray, space: FockSpace, fraction: float = 0.1) -> float:
    """
    Population in the top ``fraction`` of Fock levels, maximised over modes.

    Diagnoses truncation validity; at least one level is always counted.
    """
    return populations_leakage(np.abs(psi) ** 2, space, fraction)


def populations_leakage(probabilities: np.ndarray, space: FockSpace, fraction: float = 0.1) -> float:
    """:func:`leakage` from joint basis probabilities (e.g. the diagonal of a density matrix)."""
    top = max(1, int(np.ceil(fraction * space.n_levels)))
    probabilities = np.real(probabilities)
    if space.n_modes == 1:
        return float(probabilities[-top:].sum())
    grid = probabilities.reshape(space.n_levels, space.n_levels)
    worst = 0.0
    for mode in range(space.n_modes):
        populations = grid.sum(axis=1 - mode)
        worst = max(worst, float(populations[-top:].sum()))
    return worst
