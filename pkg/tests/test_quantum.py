import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magres.model import GaugeField, HamiltonianSpec, PotentialModel, isotropic_benchmark, quadratic_spec
from magres.quantum import (SpectralResult, TruncationError, assemble, assemble_and_diagonalize,
                            fock_darwin_spectrum, kappa_derivatives, mode_branches, quadratic_spectrum,
                            spectrum_for)

import oracles


def quartic_spec(kappa_scale=1.0):
    pot = PotentialModel(2, {(2, 0): 0.5, (0, 2): 1.0, (4, 0): 0.05, (2, 2): 0.03}, offset=1.0)
    return HamiltonianSpec(pot, GaugeField.symmetric(kappa_scale))


def test_fock_darwin_ground_state():
    res = fock_darwin_spectrum(1.0, 1.0, 1.0, count=1)
    assert res.energies[0] == pytest.approx(oracles.FD_GROUND_K1, rel=1e-15)


@given(st.floats(0.3, 3.0), st.floats(-4.0, 4.0), st.floats(0.01, 1.0))
@settings(max_examples=30, deadline=None)
def test_fock_darwin_matches_enumeration(omega, kappa, hbar):
    res = fock_darwin_spectrum(omega, kappa, hbar, count=40)
    assert np.allclose(res.energies, oracles.fock_darwin_levels(omega, kappa, hbar, 40), rtol=1e-13)


def test_fock_darwin_slopes_match_difference():
    h = 1e-6
    a = fock_darwin_spectrum(1.0, 0.7 + h, 0.1, count=30).energies
    b = fock_darwin_spectrum(1.0, 0.7 - h, 0.1, count=30).energies
    res = fock_darwin_spectrum(1.0, 0.7, 0.1, count=30)
    assert np.allclose(res.dE_dkappa, (a - b) / (2 * h), atol=1e-8)


@pytest.mark.parametrize("kappa", [0.0, 0.4, 1.0])
def test_normal_mode_spectrum_matches_fock_darwin(kappa):
    spec = isotropic_benchmark()
    a = quadratic_spectrum(spec, kappa, 0.05, count=200)
    b = fock_darwin_spectrum(1.0, kappa, 0.05, count=200)
    assert np.allclose(a.energies, b.energies, rtol=1e-13)
    # level order within degenerate shells is arbitrary: compare sorted per-energy sums
    assert math.fsum(a.dE_dkappa) == pytest.approx(math.fsum(b.dE_dkappa), abs=1e-9)
    assert math.fsum(a.d2E_dkappa2) == pytest.approx(math.fsum(b.d2E_dkappa2), rel=1e-8)


def test_branch_tracking_through_degeneracy():
    w, d1, d2, e0 = mode_branches(isotropic_benchmark(), 0.0)
    assert w == pytest.approx([1.0, 1.0])
    assert sorted(d1) == pytest.approx([-0.5, 0.5], abs=1e-9)
    assert d2 == pytest.approx([0.25, 0.25], abs=1e-8)
    assert e0 == pytest.approx(1.0)


def test_anisotropic_branches():
    spec = quadratic_spec([1.0, math.sqrt(2)], GaugeField.symmetric(1.0))
    hi, lo = oracles.anisotropic_frequencies(1.0, math.sqrt(2), 1.0)
    w, d1, d2, _ = mode_branches(spec, 1.0)
    assert w == pytest.approx([lo, hi], rel=1e-12)
    h = 1e-4
    up = mode_branches(spec, 1 + h)[0]
    dn = mode_branches(spec, 1 - h)[0]
    assert d2 == pytest.approx((up - 2 * w + dn) / h**2, rel=1e-5)


def test_assembled_matrices_exactly_hermitian():
    H, dH = assemble(quartic_spec(), 0.8, 0.2, 12)
    assert np.array_equal(H, H.conj().T)
    assert np.array_equal(dH, dH.conj().T)


def test_galerkin_reproduces_fock_darwin():
    res = assemble_and_diagonalize(isotropic_benchmark(), 1.0, 0.1, 24, n_levels=20)
    ref = oracles.fock_darwin_levels(1.0, 1.0, 0.1, 20)
    assert np.max(np.abs(res.energies - ref) / ref) <= 1e-10
    assert np.all(res.converged)


def test_galerkin_hellmann_feynman_matches_difference():
    spec = quartic_spec()
    h = 1e-5
    res = assemble_and_diagonalize(spec, 0.6, 0.2, 28, n_levels=15)
    up = assemble_and_diagonalize(spec, 0.6 + h, 0.2, 28, n_levels=15, derivatives=False).energies
    dn = assemble_and_diagonalize(spec, 0.6 - h, 0.2, 28, n_levels=15, derivatives=False).energies
    assert np.allclose(res.dE_dkappa, (up - dn) / (2 * h), atol=1e-7)
    assert np.allclose(kappa_derivatives(spec, 0.6, 0.2, res), res.dE_dkappa, atol=1e-12)


def test_degenerate_levels_get_diagonalized_slopes():
    res = assemble_and_diagonalize(isotropic_benchmark(), 0.0, 0.1, 20, n_levels=6)
    ref = fock_darwin_spectrum(1.0, 0.0, 0.1, count=6)
    assert sorted(np.round(res.dE_dkappa, 9)) == pytest.approx(sorted(np.round(ref.dE_dkappa, 9)), abs=1e-8)


def test_truncation_error_when_basis_too_small():
    with pytest.raises(TruncationError):
        assemble_and_diagonalize(quartic_spec(), 0.5, 0.5, 12, require=60)
    with pytest.raises(ValueError):
        assemble_and_diagonalize(quartic_spec(), 0.5, 0.5, 8)


def test_spectrum_for_quartic_reaches_cutoff():
    res = spectrum_for(quartic_spec(), 0.3, 0.5, e_max=4.0, basis_per_axis=32)
    assert res.energies[-1] > 4.0 >= res.energies[-2]
    assert np.all(res.converged)


def test_sorted_energies_enforced():
    with pytest.raises(ValueError):
        SpectralResult(np.array([2.0, 1.0]), None, 0.1, 0.0)


def test_spectrum_csv(tmp_path):
    res = fock_darwin_spectrum(1.0, 0.5, 0.1, count=5)
    res.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "j,E,dE_dkappa,converged" and len(lines) == 6


def test_zero_field_isotropic_levels():
    res = fock_darwin_spectrum(1.0, 0.0, 1.0, count=6)
    assert list(res.energies) == pytest.approx([2, 3, 3, 4, 4, 4])


def test_landau_level_spacing_in_weak_confinement():
    # W+ - W- = kappa and W- -> 0: the a-ladder spacing hbar W+ tends to hbar kappa
    hbar, kappa = 0.1, 1.0
    for omega in (0.1, 0.03, 0.01):
        wp = math.sqrt(omega**2 + kappa**2 / 4) + kappa / 2
        E0 = 1 + hbar * math.sqrt(omega**2 + kappa**2 / 4)
        res = fock_darwin_spectrum(omega, kappa, hbar, e_max=E0 + hbar * wp * 1.0000001)
        assert np.min(np.abs(res.energies - (res.energies[0] + hbar * wp))) <= 1e-12
        assert abs(hbar * wp - hbar * kappa) <= hbar * omega**2 / kappa


def test_separable_zero_field_levels_are_mode_sums():
    spec = quadratic_spec([1.0, 1.7], GaugeField.zero())
    res = assemble_and_diagonalize(spec, 0.0, 0.2, 24, n_levels=20)
    ref = sorted(1 + 0.2 * ((a + 0.5) + 1.7 * (b + 0.5)) for a in range(30) for b in range(30))[:20]
    assert np.allclose(res.energies, ref, rtol=1e-12)


def test_quartic_first_order_shift():
    # <0| |q|^4 |0> = 2 <q^4> + 2 <q^2>^2 = 2 (hbar^2/w^2) per isotropic ground state (w = 1: 3/4 + 3/4 + 1/2)
    eps, hbar = 1e-3, 1.0
    pot = PotentialModel(2, {(2, 0): 0.5, (0, 2): 0.5, (4, 0): eps, (0, 4): eps, (2, 2): 2 * eps}, offset=1.0)
    spec = HamiltonianSpec(pot, GaugeField.zero())
    e0 = assemble_and_diagonalize(spec, 0.0, hbar, 24, n_levels=1).energies[0]
    expected = eps * 2.0 * hbar**2
    assert (e0 - 2.0) == pytest.approx(expected, rel=0.05)


def test_zero_angular_momentum_levels_have_zero_slope():
    res = fock_darwin_spectrum(1.0, 0.0, 1.0, count=9)
    # E = 2 and the centre of the E = 4 shell carry l = 0
    assert res.dE_dkappa[0] == 0.0
    assert 0.0 in list(res.dE_dkappa[3:6])


def test_hellmann_feynman_sum_rule():
    from magres.thermo import ThermoState, grand_potential, magnetization_exact

    spec = quartic_spec()
    state = ThermoState(hbar=0.5, beta=10.0, mu=2.5, kappa=0.4)
    e_max = state.mu + 45 / state.beta
    h = 1e-4
    om = [grand_potential(spectrum_for(spec, k, 0.5, e_max, 36), state) for k in (0.4 - h, 0.4 + h)]
    M = magnetization_exact(spectrum_for(spec, 0.4, 0.5, e_max, 36), state)
    assert M == pytest.approx((om[1] - om[0]) / (2 * h), abs=1e-6)
