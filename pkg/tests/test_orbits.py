import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from magres.model import GaugeField, isotropic_benchmark, quadratic_spec
from magres.orbits import FrameError, find_periodic_orbits, maslov_index, orbit_table_csv, poincare_reduce

import oracles

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def aniso_zero_field():
    spec = quadratic_spec([1.0, SQRT2], GaugeField.symmetric(1.0))
    return spec, find_periodic_orbits(spec, 0.0, 2.0, tau=7.0)


@pytest.fixture(scope="module")
def aniso_unit_field():
    spec = quadratic_spec([1.0, SQRT2], GaugeField.symmetric(1.0))
    return spec, find_periodic_orbits(spec, 1.0, 2.0, tau=9.0)


def test_two_libration_primitives(aniso_zero_field):
    _, res = aniso_zero_field
    prims = res.primitives()
    periods = sorted(o.primitive_period for o in prims)
    assert periods == pytest.approx([2 * math.pi / SQRT2, 2 * math.pi], rel=1e-9)
    for o in prims:
        w = 2 * math.pi / o.primitive_period
        assert o.action == pytest.approx(oracles.mode_action(1.0, w), rel=1e-9)
        assert o.moment == pytest.approx(0.0, abs=1e-10) and o.flux == pytest.approx(0.0, abs=1e-10)


def test_rotation_determinant_of_slow_libration(aniso_zero_field):
    _, res = aniso_zero_field
    slow = [o for o in res.primitives() if abs(o.primitive_period - 2 * math.pi) < 1e-6]
    assert len(slow) == 1
    assert slow[0].det_one_minus_P == pytest.approx(oracles.DET_ROTATION_SQRT2, abs=1e-6)


def test_maslov_of_mode_orbits(aniso_zero_field):
    _, res = aniso_zero_field
    for o in res.orbits:
        w_self = 2 * math.pi / o.primitive_period
        w_other = SQRT2 if abs(w_self - 1.0) < 1e-6 else 1.0
        assert o.maslov == oracles.maslov_mode_orbit(o.repetitions, w_other / w_self)
        assert o.maslov_longitudinal == 2 * o.repetitions


def test_ebk_with_longitudinal_index_reproduces_oscillator_levels(aniso_zero_field):
    # S(E) = 2 pi hbar (k + nu/4) on the w = 1 libration, plus the zero point of the other mode
    _, res = aniso_zero_field
    slow = [o for o in res.primitives() if abs(o.primitive_period - 2 * math.pi) < 1e-6][0]
    hbar = 0.1
    w = 2 * math.pi / slow.primitive_period
    ebk = [1 + w * hbar * (k + slow.maslov_longitudinal / 4) + hbar * SQRT2 / 2 for k in range(5)]
    exact = np.array([1 + hbar * ((a + 0.5) + SQRT2 * (b + 0.5)) for a in range(40) for b in range(40)])
    for e in ebk:
        assert np.min(np.abs(exact - e)) <= 1e-12


def test_repetitions_multiply(aniso_zero_field):
    _, res = aniso_zero_field
    fast = sorted((o for o in res.orbits if abs(o.primitive_period - 2 * math.pi / SQRT2) < 1e-6),
                  key=lambda o: o.repetitions)
    assert [o.repetitions for o in fast] == [1]
    spec, _ = aniso_zero_field
    longer = find_periodic_orbits(spec, 0.0, 2.0, tau=13.0)
    reps = [o for o in longer.orbits if abs(o.primitive_period - 2 * math.pi / SQRT2) < 1e-6]
    assert [o.repetitions for o in reps] == [1, 2]
    assert reps[1].action == pytest.approx(2 * reps[0].action)
    assert reps[1].det_one_minus_P == pytest.approx(oracles.det_rotation(2 * 2 * math.pi / SQRT2), abs=1e-6)


def test_isotropic_zero_field_is_flagged_degenerate():
    res = find_periodic_orbits(isotropic_benchmark(), 0.0, 2.0, tau=7.0, n_seeds=4)
    assert res.orbits == []
    assert res.degenerate and all(o.degenerate for o in res.degenerate)
    assert any("non-isolated" in n for n in res.notes)


def test_moment_is_minus_flux(aniso_unit_field):
    _, res = aniso_unit_field
    assert len(res.primitives()) == 2
    for o in res.orbits:
        assert o.moment == pytest.approx(-o.flux, abs=1e-8)
        assert abs(np.linalg.det(o.monodromy) - 1) <= 1e-8


def test_unit_field_frequencies(aniso_unit_field):
    _, res = aniso_unit_field
    hi, lo = oracles.anisotropic_frequencies(1.0, SQRT2, 1.0)
    periods = sorted(o.primitive_period for o in res.primitives())
    assert periods == pytest.approx([2 * math.pi / hi, 2 * math.pi / lo], rel=1e-9)


def test_circular_mode_flux_matches_circle_area():
    spec = isotropic_benchmark()
    res = find_periodic_orbits(spec, 1.0, 2.0, tau=12.0)
    prims = res.primitives()
    assert len(prims) == 2
    for o in prims:
        r = np.linalg.norm(o.x0[:2])
        # unit field, symmetric gauge: |flux| = enclosed area of the circle of radius r
        assert abs(o.flux) == pytest.approx(math.pi * r * r, rel=1e-8)
        assert o.moment == pytest.approx(-o.flux, abs=1e-8)


@given(st.floats(0.05, 2.95).filter(lambda w: abs(w - round(w)) > 0.02))
@settings(max_examples=20, deadline=None)
def test_poincare_determinant_of_linear_flow(w2):
    spec = quadratic_spec([1.0, w2], GaugeField.zero())
    x0 = np.array([1.0, 0.0, 0.0, 0.0])
    M = linalg.expm(2 * math.pi * spec.J @ spec.hessian(0.0, x0))
    _, det = poincare_reduce(M, spec.vector_field(0.0, x0), spec.gradient(0.0, x0))
    assert det == pytest.approx(oracles.det_rotation(2 * math.pi * w2), abs=1e-9)


def test_antipodal_and_trivial_rotation():
    for w2, expect in ((0.5, 4.0), (1.0 + 1e-9, 0.0)):
        spec = quadratic_spec([1.0, w2], GaugeField.zero())
        x0 = np.array([1.0, 0.0, 0.0, 0.0])
        M = linalg.expm(2 * math.pi * spec.J @ spec.hessian(0.0, x0))
        _, det = poincare_reduce(M, spec.vector_field(0.0, x0), spec.gradient(0.0, x0))
        assert det == pytest.approx(expect, abs=1e-6)


def test_broken_closure_rejected():
    spec = quadratic_spec([1.0, SQRT2], GaugeField.zero())
    x0 = np.array([1.0, 0.0, 0.0, 0.0])
    M = linalg.expm(5.0 * spec.J @ spec.hessian(0.0, x0))
    with pytest.raises(FrameError):
        poincare_reduce(M, spec.vector_field(0.0, x0), spec.gradient(0.0, x0))


def test_maslov_data_repetition_rule():
    spec = quadratic_spec([1.0, SQRT2], GaugeField.zero())
    data = maslov_index(spec, 0.0, [SQRT2, 0.0, 0.0, 0.0], 2 * math.pi)
    assert data.stability == "elliptic" and data.longitudinal == 2
    for r in (1, 2, 3):
        assert data.repeated(r) == (oracles.maslov_mode_orbit(r, SQRT2), 2 * r)


def test_orbit_table_csv(tmp_path, aniso_zero_field):
    _, res = aniso_zero_field
    orbit_table_csv(res.orbits, tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0].startswith("T_primitive,repetitions,T,S,maslov") and len(lines) == len(res.orbits) + 1
