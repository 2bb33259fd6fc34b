"""
Tests for expectation values, entanglement entropy and density-matrix helpers.
"""

import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from app.physics.hilbert import DimensionMismatchError, FockSpace, ModeIndexError, annihilation, coherent_state, fock_state, number, position
from app.physics.observables import (
    NumericalValidityError,
    ensemble_density_matrix,
    entanglement_entropy,
    expectation,
    purity,
    schmidt_coefficients,
    trace_distance,
    von_neumann_entropy,
)


def random_state(rng, dim):
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# ============================================================================
# 1. EXPECTATION VALUES
# ============================================================================

class TestExpectation:
    """<psi|A|psi> for Fock and coherent states."""

    def test_vacuum_occupation(self):
        space = FockSpace(5)
        assert expectation(fock_state(space, [0]), number(space)) == 0

    def test_coherent_eigenvalue(self):
        space = FockSpace(30)
        alpha = 0.8 - 0.4j
        value = expectation(coherent_state(space, [alpha]), annihilation(space))
        assert abs(value - alpha) < 1e-10

    def test_position_vanishes_on_fock_states(self):
        space = FockSpace(8)
        x = position(space)
        for n in range(8):
            assert abs(expectation(fock_state(space, [n]), x)) < 1e-15

    def test_hermitian_expectation_is_real(self, rng):
        space = FockSpace(6, 2)
        value = expectation(random_state(rng, space.dim), position(space, 1))
        assert abs(value.imag) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            expectation(np.ones(3) / math.sqrt(3), number(FockSpace(4)))


# ============================================================================
# 2. ENTANGLEMENT ENTROPY
# ============================================================================

class TestEntanglementEntropy:
    """Entropy of entanglement in nats."""

    def test_product_state(self):
        space = FockSpace(6, 2)
        psi = coherent_state(space, [0.4, 1.0j])
        assert entanglement_entropy(psi, space) == pytest.approx(0.0, abs=1e-10)

    def test_bell_pair(self):
        space = FockSpace(4, 2)
        psi = (fock_state(space, [0, 0]) + fock_state(space, [1, 1])) / math.sqrt(2.0)
        assert entanglement_entropy(psi, space) == pytest.approx(math.log(2.0), abs=1e-10)

    def test_both_reductions_agree(self, rng):
        space = FockSpace(5, 2)
        for _ in range(1000):
            psi = random_state(rng, space.dim)
            assert entanglement_entropy(psi, space, 0) == pytest.approx(entanglement_entropy(psi, space, 1), abs=1e-9)

    def test_bounds_and_schmidt_rank(self, rng):
        space = FockSpace(5, 2)
        for _ in range(100):
            psi = random_state(rng, space.dim)
            s = entanglement_entropy(psi, space)
            assert 0.0 <= s <= math.log(space.n_levels) + 1e-8
            assert schmidt_coefficients(psi, space)[0] < 1.0 - 1e-8
        assert schmidt_coefficients(fock_state(space, [2, 3]), space)[0] == pytest.approx(1.0, abs=1e-8)

    def test_local_unitary_invariance(self, rng):
        space = FockSpace(5, 2)
        for seed in range(20):
            psi = random_state(rng, space.dim)
            u = unitary_group.rvs(5, random_state=seed)
            v = unitary_group.rvs(5, random_state=seed + 100)
            rotated = np.kron(u, v) @ psi
            assert entanglement_entropy(rotated, space) == pytest.approx(entanglement_entropy(psi, space), abs=1e-9)

    def test_single_mode_rejected(self):
        space = FockSpace(4, 1)
        with pytest.raises(ModeIndexError):
            entanglement_entropy(fock_state(space, [0]), space)


class TestVonNeumannEntropy:
    """Eigenvalue floor and corruption check."""

    def test_maximally_mixed(self):
        assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(math.log(4.0))

    def test_tiny_negative_eigenvalue_clamped(self):
        rho = np.diag([1.0 + 1e-10, -1e-10])
        assert von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-9)

    def test_negative_eigenvalue_is_corruption(self):
        with pytest.raises(NumericalValidityError):
            von_neumann_entropy(np.diag([1.1, -0.1]))


# ============================================================================
# 3. DENSITY MATRICES
# ============================================================================

class TestDensityMatrices:
    """Ensemble density matrix, purity and trace distance."""

    def test_ensemble_of_orthogonal_states(self):
        space = FockSpace(3)
        rho = ensemble_density_matrix([fock_state(space, [0]), fock_state(space, [1])])
        np.testing.assert_allclose(rho, np.diag([0.5, 0.5, 0.0]))
        assert purity(rho) == pytest.approx(0.5)

    def test_empty_ensemble(self):
        with pytest.raises(ValueError):
            ensemble_density_matrix([])

    def test_trace_distance_of_orthogonal_pure_states(self):
        space = FockSpace(3)
        rho = ensemble_density_matrix([fock_state(space, [0])])
        sigma = ensemble_density_matrix([fock_state(space, [2])])
        assert trace_distance(rho, sigma) == pytest.approx(1.0)
        assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-15)


# ============================================================================
# TEST CONFIGURATION
# ============================================================================

if __name__ == '__main__':
    pytest.main([__file__, '-v', '--tb=short'])
