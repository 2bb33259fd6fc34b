"""
Tests for the Duffing pair, SQUID pair and damped-mode system models.
"""

import math

import numpy as np
import pytest

from app.models import DuffingParams
from app.physics.circuit import (
    apply_scaling,
    base_squid_params,
    position_scale,
    scale_to_capacitance,
    squid_dimensionless,
)
from app.physics.hilbert import (
    FockSpace,
    ModeIndexError,
    annihilation,
    coherent_state,
    is_hermitian,
    position,
)
from app.physics.observables import entanglement_entropy
from app.physics.systems import damped_mode, default_observables, duffing_pair, squid_pair, squid_ring


@pytest.fixture
def pair_space():
    return FockSpace(n_levels=6, n_modes=2)


def dense(op):
    return op.toarray()


# ============================================================================
# 1. DUFFING PAIR
# ============================================================================

class TestDuffingPair:
    """H(t) and Lindblad operators of the coupled Duffing oscillators."""

    def test_hermitian_at_random_times(self, pair_space):
        model = duffing_pair(DuffingParams(), pair_space)
        for tau in np.random.default_rng(1).uniform(0, 20, size=100):
            assert is_hermitian(model.hamiltonian_at(tau))

    def test_drive_vanishes_at_quarter_period(self, pair_space):
        model = duffing_pair(DuffingParams(), pair_space)
        np.testing.assert_allclose(dense(model.hamiltonian_at(math.pi / 2)),
                                   dense(model.static_hamiltonian), atol=1e-15)

    def test_drive_coefficient(self, pair_space):
        model = duffing_pair(DuffingParams(beta=1.0, g=0.3), pair_space)
        term = model.drive_terms[0]
        assert term.signal(0.0) == pytest.approx(0.3)
        np.testing.assert_allclose(dense(term.operator),
                                   dense(position(pair_space, 0) + position(pair_space, 1)), atol=1e-15)

    def test_coupling_term(self, pair_space):
        coupled = duffing_pair(DuffingParams(mu=0.2), pair_space).static_hamiltonian
        free = duffing_pair(DuffingParams(mu=0.0), pair_space).static_hamiltonian
        expected = 0.2 * (position(pair_space, 0) @ position(pair_space, 1))
        np.testing.assert_allclose(dense(coupled - free), dense(expected), atol=1e-14)

    def test_uncoupled_undamped_has_no_cross_mode_terms(self, pair_space):
        h = dense(duffing_pair(DuffingParams(mu=0.0, gamma=0.0), pair_space).hamiltonian_at(0.4))
        n = pair_space.n_levels
        blocks = h.reshape(n, n, n, n)
        # H = A(x)I + I(x)B: entries changing both occupation numbers vanish
        for m0 in range(n):
            for n0 in range(n):
                if m0 == n0:
                    continue
                off = blocks[m0, :, n0, :]
                np.testing.assert_allclose(off - np.diag(np.diag(off)), 0.0, atol=1e-14)

    def test_lindblad_operators(self, pair_space):
        model = duffing_pair(DuffingParams(gamma=0.125), pair_space)
        assert len(model.lindblad_ops) == 2
        for mode, op in enumerate(model.lindblad_ops):
            np.testing.assert_allclose(dense(op), math.sqrt(0.25) * dense(annihilation(pair_space, mode)))

    def test_drive_period(self, pair_space):
        assert duffing_pair(DuffingParams(), pair_space).drive_period == pytest.approx(2 * math.pi)

    def test_needs_two_modes(self):
        with pytest.raises(ModeIndexError):
            duffing_pair(DuffingParams(), FockSpace(6, 1))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            DuffingParams(beta=0.0)
        with pytest.raises(ValueError):
            DuffingParams(gamma=-0.1)


# ============================================================================
# 2. SQUID PAIR
# ============================================================================

class TestSquidPair:
    """Coupled SQUID rings in the bias and lab frames."""

    @pytest.mark.parametrize("frame", ['bias', 'lab'])
    def test_hermitian_at_random_times(self, pair_space, frame):
        model = squid_pair(base_squid_params(), pair_space, frame=frame)
        for tau in np.random.default_rng(2).uniform(0, 20, size=100):
            assert is_hermitian(model.hamiltonian_at(tau))

    def test_coupling_term_in_lab_frame(self, pair_space):
        phys = base_squid_params()
        coupled = squid_pair(phys, pair_space, mu=0.2, frame='lab').static_hamiltonian
        free = squid_pair(phys, pair_space, mu=0.0, frame='lab').static_hamiltonian
        expected = 0.2 * (position(pair_space, 0) @ position(pair_space, 1))
        np.testing.assert_allclose(dense(coupled - free), dense(expected), atol=1e-12)

    def test_lindblad_rate_is_zeta(self, pair_space):
        phys = base_squid_params()
        zeta = squid_dimensionless(phys).zeta
        model = squid_pair(phys, pair_space)
        np.testing.assert_allclose(dense(model.lindblad_ops[1]),
                                   math.sqrt(2 * zeta) * dense(annihilation(pair_space, 1)), atol=1e-15)

    def test_jump_rates_differ_between_frames(self):
        # The ground state at the static bias is the vacuum in the bias frame and
        # a coherent state of amplitude X0/sqrt(2) in the lab frame.
        phys = scale_to_capacitance(base_squid_params(), 1e-16)
        d = squid_dimensionless(phys)
        space = FockSpace(n_levels=16, n_modes=2)
        alpha = position_scale(d) * d.phi_x / math.sqrt(2.0)

        def jump_rate(model, psi):
            op = model.lindblad_ops[0]
            return float(np.vdot(psi, op.conj().T @ (op @ psi)).real)

        bias = squid_pair(phys, space, frame='bias')
        lab = squid_pair(phys, space, frame='lab')
        assert jump_rate(bias, coherent_state(space, [0.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
        assert jump_rate(lab, coherent_state(space, [alpha, alpha])) == pytest.approx(
            2 * d.zeta * alpha ** 2, rel=1e-3)

    def test_drive_period_follows_drive_frequency(self, pair_space):
        phys = apply_scaling(base_squid_params(), 4.0, 1.0)
        model = squid_pair(phys, pair_space)
        assert model.drive_period == pytest.approx(squid_dimensionless(phys).drive_period)
        assert model.drive_period == pytest.approx(2 * math.pi, rel=1e-12)

    def test_invalid_frame(self, pair_space):
        with pytest.raises(ValueError):
            squid_pair(base_squid_params(), pair_space, frame='rotating')

    def test_needs_two_modes(self):
        with pytest.raises(ModeIndexError):
            squid_pair(base_squid_params(), FockSpace(6, 1))

    def test_harmonic_limit_spectrum(self):
        from dataclasses import replace
        # I_c = 0, zeta -> 0: two harmonic oscillators, levels n + 1/2
        phys = replace(base_squid_params(), I_c=1e-30, R=1e30, I_d=0.0)
        space = FockSpace(12, 1)
        model = squid_ring(phys, space)
        eigenvalues = np.linalg.eigvalsh(dense(model.hamiltonian_at(0.0)))
        np.testing.assert_allclose(eigenvalues[:6], np.arange(6) + 0.5, atol=1e-8)

    def test_uncoupled_product_state_has_no_entanglement(self, pair_space):
        psi = coherent_state(pair_space, [0.3, -0.2j])
        assert entanglement_entropy(psi, pair_space) < 1e-10


# ============================================================================
# 3. DAMPED MODE
# ============================================================================

class TestDampedMode:
    """Single driven damped mode used as the oracle model."""

    def test_hamiltonian_without_correction_is_harmonic(self):
        space = FockSpace(8)
        model = damped_mode(space, zeta=0.1, damping_correction=False)
        eigenvalues = np.linalg.eigvalsh(dense(model.static_hamiltonian))
        np.testing.assert_allclose(eigenvalues[:4], np.arange(4) + 0.5, atol=1e-12)

    def test_drive_term(self):
        model = damped_mode(FockSpace(8), zeta=0.1, drive_amplitude=0.5, drive_frequency=2.0)
        assert len(model.drive_terms) == 1
        assert model.drive_period == pytest.approx(math.pi)
        assert model.drive_terms[0].signal(0.0) == pytest.approx(0.5)

    def test_default_observables(self):
        names = set(default_observables(FockSpace(4, 2)))
        assert names == {'x0', 'p0', 'n0', 'x1', 'p1', 'n1'}

    def test_negative_damping_rejected(self):
        with pytest.raises(ValueError):
            damped_mode(FockSpace(4), zeta=-0.1)


# ============================================================================
# TEST CONFIGURATION
# ============================================================================

if __name__ == '__main__':
    pytest.main([__file__, '-v', '--tb=short'])
