"""
Tests for the Lindblad master-equation oracle.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from app.dynamics.lindblad import (
    GuardRailError,
    MasterEquationRun,
    density_matrix,
    integrate_master,
    lindblad_rhs,
)
from app.models import DuffingParams
from app.physics.hilbert import DimensionMismatchError, FockSpace, annihilation, coherent_state, fock_state, number
from app.physics.observables import purity
from app.physics.systems import SystemModel, damped_mode, duffing_pair


def random_density_matrix(rng, dim):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


# ============================================================================
# 1. RIGHT-HAND SIDE
# ============================================================================

class TestLindbladRhs:
    """Generator of the master equation."""

    def test_vanishes_without_hamiltonian_or_dissipation(self):
        space = FockSpace(5)
        model = SystemModel(space=space, static_hamiltonian=sp.csr_matrix((5, 5), dtype=np.complex128))
        rho = random_density_matrix(np.random.default_rng(1), 5)
        np.testing.assert_array_equal(lindblad_rhs(rho, model, 0.3), np.zeros((5, 5)))

    def test_trace_preserving_and_hermitian(self):
        model = duffing_pair(DuffingParams(), FockSpace(4, 2))
        rng = np.random.default_rng(2)
        for tau in (0.0, 1.3, 4.0):
            drho = lindblad_rhs(random_density_matrix(rng, 16), model, tau)
            assert abs(np.trace(drho)) < 1e-12
            np.testing.assert_allclose(drho, drho.conj().T, atol=1e-12)

    def test_occupation_decay_from_one_quantum(self):
        zeta = 0.1
        space = FockSpace(6)
        model = damped_mode(space, zeta=zeta)
        drho = lindblad_rhs(density_matrix(fock_state(space, [1])), model, 0.0)
        assert np.trace(number(space) @ drho).real == pytest.approx(-2.0 * zeta, abs=1e-12)

    def test_dimension_checked(self):
        model = damped_mode(FockSpace(4), zeta=0.1)
        with pytest.raises(DimensionMismatchError):
            lindblad_rhs(np.eye(3) / 3, model, 0.0)


# ============================================================================
# 2. INTEGRATION
# ============================================================================

class TestIntegrateMaster:
    """Fixed-step RK4 integration."""

    def test_amplitude_decays_at_rate_zeta(self):
        zeta = 0.1
        space = FockSpace(20)
        model = damped_mode(space, zeta=zeta, damping_correction=False)
        psi0 = coherent_state(space, [1.0])
        result = integrate_master(MasterEquationRun(model, density_matrix(psi0), (0.0, 10.0), 0.01, record_every=100))
        a = annihilation(space)
        amplitude = np.array([abs(np.trace(a @ rho)) for rho in result.states])
        np.testing.assert_allclose(amplitude, np.exp(-zeta * result.times), rtol=1e-6)

    def test_unitary_evolution_preserves_purity(self):
        space = FockSpace(10)
        model = damped_mode(space, zeta=0.0, drive_amplitude=0.3)
        psi0 = coherent_state(space, [0.5])
        result = integrate_master(MasterEquationRun(model, density_matrix(psi0), (0.0, 5.0), 0.01, record_every=50))
        for rho in result.states:
            assert purity(rho) == pytest.approx(1.0, abs=1e-8)

    def test_outputs_are_trace_one(self):
        model = duffing_pair(DuffingParams(), FockSpace(5, 2))
        psi0 = coherent_state(model.space, [0.3, -0.3])
        result = integrate_master(MasterEquationRun(model, density_matrix(psi0), (0.0, 1.0), 0.01, record_every=20))
        assert len(result.times) == 6
        for rho in result.states:
            assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        assert result.max_trace_correction < 1e-6

    def test_final_step_always_recorded(self):
        model = damped_mode(FockSpace(5), zeta=0.1)
        result = integrate_master(MasterEquationRun(
            model, density_matrix(fock_state(model.space, [1])), (0.0, 0.25), 0.01, record_every=10,
        ))
        assert result.times[-1] == pytest.approx(0.25)

    def test_expectations_by_name(self):
        space = FockSpace(6)
        model = damped_mode(space, zeta=0.2)
        result = integrate_master(MasterEquationRun(model, density_matrix(fock_state(space, [2])), (0.0, 1.0), 0.01, record_every=50))
        values = result.expectations({'n0': number(space)})
        assert values['n0'][0] == pytest.approx(2.0)
        assert values['n0'][-1] < 2.0

    def test_guard_rail_on_large_spaces(self):
        space = FockSpace(65, 2)
        model = SystemModel(space=space, static_hamiltonian=sp.csr_matrix((space.dim, space.dim), dtype=np.complex128))
        with pytest.raises(GuardRailError):
            MasterEquationRun(model, np.ones((1, 1)), (0.0, 1.0), 0.1)


class TestMasterEquationRun:
    """Validation of the initial density matrix."""

    def test_rejects_wrong_shape(self):
        model = damped_mode(FockSpace(4), zeta=0.1)
        with pytest.raises(DimensionMismatchError):
            MasterEquationRun(model, np.eye(3) / 3, (0.0, 1.0), 0.01)

    def test_rejects_non_unit_trace(self):
        model = damped_mode(FockSpace(4), zeta=0.1)
        with pytest.raises(ValueError):
            MasterEquationRun(model, np.eye(4), (0.0, 1.0), 0.01)

    def test_rejects_non_hermitian(self):
        model = damped_mode(FockSpace(2), zeta=0.1)
        rho = np.array([[0.5, 0.5j], [0.5j, 0.5]])
        with pytest.raises(ValueError):
            MasterEquationRun(model, rho, (0.0, 1.0), 0.01)

    def test_rejects_bad_record_interval(self):
        model = damped_mode(FockSpace(2), zeta=0.1)
        with pytest.raises(ValueError):
            MasterEquationRun(model, np.eye(2) / 2, (0.0, 1.0), 0.01, record_every=0)


# ============================================================================
# TEST CONFIGURATION
# ============================================================================

if __name__ == '__main__':
    pytest.main([__file__, '-v', '--tb=short'])
