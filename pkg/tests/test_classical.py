import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from magres.classical import (CriticalEnergyError, EmptyRegionError, energy_shell_samples, integrate_flow,
                              integrate_tangent, liouville_surface_integral, phase_space_volume,
                              volume_monte_carlo)
from magres.model import GaugeField, HamiltonianSpec, PotentialModel, isotropic_benchmark, quadratic_spec

import oracles


def anisotropic():
    return quadratic_spec([1.0, math.sqrt(2)], GaugeField.symmetric(1.0))


def test_harmonic_period_closes():
    traj = integrate_flow(isotropic_benchmark(), 0.0, [1, 0, 0, 0], 2 * math.pi)
    assert np.linalg.norm(traj.x[-1] - [1, 0, 0, 0]) <= 1e-9


def test_energy_conservation_long_run():
    traj = integrate_flow(anisotropic(), 1.0, [0.5, -0.2, 0.3, 0.7], 50.0)
    assert traj.max_relative_drift <= 1e-10


def test_flow_reversibility():
    spec = anisotropic()
    x0 = np.array([0.5, -0.2, 0.3, 0.7])
    fwd = integrate_flow(spec, 1.0, x0, 7.0).x[-1]
    # reverse time: (q, p, kappa) -> (q, -p, -kappa)
    back = integrate_flow(spec, -1.0, np.concatenate([fwd[:2], -fwd[2:]]), 7.0).x[-1]
    assert np.linalg.norm(np.concatenate([back[:2], -back[2:]]) - x0) <= 1e-8


def test_tangent_linear_flow_matches_expm():
    spec = anisotropic()
    x0 = np.array([0.3, 0.1, -0.2, 0.4])
    traj = integrate_flow(spec, 1.0, x0, 3.0, t_eval=np.linspace(0, 3.0, 7))
    frame = integrate_tangent(spec, 1.0, traj)
    assert np.allclose(frame.matrices[0], np.eye(4))
    A = spec.J @ spec.hessian(1.0, x0)
    for t, M in zip(frame.t, frame.matrices):
        assert np.max(np.abs(M - linalg.expm(t * A))) <= 1e-8
        assert abs(np.linalg.det(M) - 1.0) <= 1e-8
    assert frame.symplectic_defect() <= 1e-8


def test_flat_potential_rejected():
    with pytest.raises(ValueError):
        HamiltonianSpec(PotentialModel(2, {}, offset=1.0), GaugeField.zero())


def test_ellipsoid_volume_closed_form_and_mc():
    spec = isotropic_benchmark()
    exact = phase_space_volume(spec, 0.0, 2.0)
    assert exact.value == pytest.approx(oracles.ELLIPSOID_VOLUME_MU2, rel=1e-14)
    mc = phase_space_volume(spec, 0.0, 2.0, method="mc", samples=1 << 20)
    assert abs(mc.value - exact.value) <= 4 * mc.stderr


def test_volume_edge_cases():
    spec = isotropic_benchmark()
    assert phase_space_volume(spec, 0.0, 1.0).value == 0.0
    with pytest.raises(EmptyRegionError):
        phase_space_volume(spec, 0.0, 0.5)


def test_p_odd_integrand_vanishes():
    spec = anisotropic()
    est = phase_space_volume(spec, 0.7, 2.0, g=lambda q, p: p[:, 0] - 0.7 * spec.gauge(q)[:, 0],
                             p_dependent=True, samples=1 << 19)
    assert abs(est.value) <= 4 * est.stderr


def test_liouville_closed_form_and_linearity():
    spec = isotropic_benchmark()
    assert liouville_surface_integral(spec, 0.0, 2.0).value == pytest.approx(oracles.LIOUVILLE_AREA_MU2)
    assert liouville_surface_integral(spec, 0.0, 2.0, g=3.0).value == pytest.approx(3 * oracles.LIOUVILLE_AREA_MU2)
    near = [liouville_surface_integral(spec, 0.0, 1.0 + e).value for e in (1e-3, 2e-3)]
    assert near[1] / near[0] == pytest.approx(2.0, rel=1e-12)


def test_liouville_mc_path_matches_closed_form():
    spec = isotropic_benchmark()
    est = liouville_surface_integral(spec, 0.0, 2.0, g=lambda q: np.ones(len(q)), samples=1 << 21)
    assert abs(est.value - oracles.LIOUVILLE_AREA_MU2) <= 4 * est.stderr + 1e-3 * oracles.LIOUVILLE_AREA_MU2


@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(-1.5, 1.5), st.floats(1.2, 3.0))
@settings(max_examples=10, deadline=None)
def test_surface_integral_is_volume_derivative(w1, w2, kappa, mu):
    spec = quadratic_spec([w1, w2], GaugeField.symmetric(1.0))
    d = liouville_surface_integral(spec, kappa, mu, rel_step=1e-3, method="richardson")
    h = 1e-4
    fd = (phase_space_volume(spec, kappa, mu + h).value - phase_space_volume(spec, kappa, mu - h).value) / (2 * h)
    assert d.value == pytest.approx(fd, rel=1e-6)
    assert abs(d.value - liouville_surface_integral(spec, kappa, mu).value) <= max(d.stderr, 1e-9 * d.value)


def test_monte_carlo_independent_of_workers():
    spec = isotropic_benchmark()
    a = volume_monte_carlo(spec, 0.0, [1.5, 2.0], samples=3 * (1 << 16) + 5, seed=7, workers=1)
    b = volume_monte_carlo(spec, 0.0, [1.5, 2.0], samples=3 * (1 << 16) + 5, seed=7, workers=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_shell_samples_on_shell():
    spec = anisotropic()
    pts = energy_shell_samples(spec, 0.6, 2.0, 200, seed=3)
    assert np.max(np.abs(spec.hamiltonian(0.6, pts) - 2.0)) <= 1e-12


def test_critical_energy_detected():
    with pytest.raises(CriticalEnergyError):
        liouville_surface_integral(isotropic_benchmark(), 0.0, 1.0)
