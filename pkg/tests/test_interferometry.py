import math
import os
import sys
from dataclasses import replace

sys.path.append(os.getcwd())

import numpy as np
import pytest

from core import (
    CODATA_2018,
    EmptyDistribution,
    MissedAperture,
    NeutronState,
    PrismPairSpec,
    ValidationError,
    deflection_magnitude,
)
from interferometry import (
    IDENTITY,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SPIN_UP_Z,
    SpinOperator,
    analyzer_intensity,
    coherence_requirements,
    focal_plane_discrepancy,
    fringe_visibility,
    kinetic_phase_identity,
    larmor_operator,
    larmor_phase_straight,
    pair_unitary,
    phase_first_order,
    phase_off_focus,
    phase_on_focus,
    phase_second_order,
    second_order_coefficients,
    relative_phase_exact,
    uniform_divergence,
    unitarity_check,
)

PAIR = PrismPairSpec(a=0.04, gap=0.0, B1=0.10385, B2=0.15)
STRONG = PAIR.scaled(10.0)
STATE = NeutronState.from_wavelength(1e-9)
SCALE = CODATA_2018.moment_magnitude / (STATE.speed * CODATA_2018.hbar)
Z_FOCUS = -PAIR.separation * PAIR.B2 / (PAIR.B1 - PAIR.B2)


def test_pauli_algebra():
    assert np.allclose(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z)
    for sigma in (SIGMA_X, SIGMA_Y, SIGMA_Z):
        assert np.allclose(sigma @ sigma, IDENTITY)


def test_spin_operator_composition_and_dagger():
    U = larmor_operator((1.0, 0.0, 0.0), 0.4)
    V = larmor_operator((0.0, 1.0, 0.0), -1.1)
    product = U @ V
    assert unitarity_check(product) < 1e-14
    assert (U @ U.dagger()).allclose(SpinOperator.identity())
    assert (U @ larmor_operator((1.0, 0.0, 0.0), -0.4)).allclose(SpinOperator.identity())
    with pytest.raises(ValidationError):
        SpinOperator(np.eye(3))


def test_analyzer_intensity_follows_cos_two_phi():
    for half in (0.0, 0.3, 1.2):
        U = larmor_operator((1.0, 0.0, 0.0), half)
        assert analyzer_intensity(U, SPIN_UP_Z) == pytest.approx((1 + math.cos(2 * half)) / 2)


def test_global_phase_does_not_change_intensity():
    U = larmor_operator((1.0, 0.0, 0.0), 0.7)
    shifted = replace(U, global_phase=2.1)
    psi = np.array([1.0, 1j]) / math.sqrt(2)
    assert analyzer_intensity(shifted, psi) == pytest.approx(analyzer_intensity(U, psi), abs=1e-15)
    assert np.allclose(shifted.full(), np.exp(2.1j) * U.matrix)


def test_phase_on_focus_is_linear_in_focus_position():
    for geometry in ("parallelogram", "triangular"):
        result = phase_on_focus(PAIR, geometry, 2e-3, 1e-3, STATE, CODATA_2018)
        assert result.phase == pytest.approx(2 * SCALE * (PAIR.B1 - PAIR.B2) * 2e-3)
        assert result.larmor + result.kinetic == pytest.approx(result.phase)
        assert result.relative == pytest.approx(2 * result.phase)


def test_straight_larmor_phase_without_divergence():
    phase = larmor_phase_straight(PAIR, "parallelogram", 1e-3, 0.0, STATE, CODATA_2018)
    assert phase == pytest.approx(2 * SCALE * (PAIR.B1 - PAIR.B2) * 1e-3)
    assert phase_on_focus(PAIR, "parallelogram", 1e-3, 0.0, STATE, CODATA_2018).kinetic == pytest.approx(
        0.0, abs=1e-12
    )


def test_first_order_phase_is_twice_off_focus_phase():
    for geometry in ("parallelogram", "triangular"):
        half = phase_off_focus(PAIR, geometry, 1.5e-3, 0.8, 2e-3, STATE, CODATA_2018).phase
        first = phase_first_order(PAIR, geometry, 1.5e-3, 0.8, 2e-3, STATE, CODATA_2018)
        assert first == pytest.approx(2 * half, rel=1e-12)


def test_divergence_cancels_at_focusing_plane():
    phases = [
        phase_first_order(PAIR, "parallelogram", 0.0, Z_FOCUS, phi, STATE, CODATA_2018)
        for phi in (-5e-3, 0.0, 5e-3)
    ]
    assert phases == pytest.approx([0.0, 0.0, 0.0], abs=1e-9)
    off = phase_first_order(PAIR, "parallelogram", 0.0, Z_FOCUS + 0.01, 5e-3, STATE, CODATA_2018)
    assert abs(off) > 1.0


def test_second_order_phase_scales_with_field_cubed():
    base = phase_second_order(PAIR, "parallelogram", 2e-3, 0.5, 0.0, STATE, CODATA_2018)
    doubled = phase_second_order(PAIR.scaled(2.0), "parallelogram", 2e-3, 0.5, 0.0, STATE, CODATA_2018)
    assert doubled == pytest.approx(8 * base, rel=1e-12)


def test_pair_unitary_is_unitary():
    rng = np.random.default_rng(7)
    for _ in range(200):
        y, z, phi = rng.uniform(-0.02, 0.02), rng.uniform(0.1, 2.0), rng.uniform(-0.01, 0.01)
        U = pair_unitary(PAIR, "parallelogram", y, z, phi, STATE, CODATA_2018)
        assert unitarity_check(U) <= 1e-12
    on_focus = pair_unitary(PAIR, "triangular", 1e-3, None, 0.0, STATE, CODATA_2018)
    assert unitarity_check(on_focus) <= 1e-12


def test_coherence_requirements():
    a1 = deflection_magnitude(PAIR.B1, STATE.speed)
    a2 = deflection_magnitude(PAIR.B2, STATE.speed)
    dz0, dy0 = coherence_requirements(PAIR, "parallelogram", 2e-3, 1.0, 0.0, STATE, CODATA_2018)
    assert dz0 == pytest.approx(2 * 2e-3 * (a2 - a1))
    assert dy0 == pytest.approx(2 * ((2e-3 - 1.0) * (a1 - a2) - PAIR.separation * a2))


def test_focal_plane_discrepancy_at_one_degree():
    phi = math.radians(1.0)
    offset = focal_plane_discrepancy(PAIR, "parallelogram", STATE.with_entry(divergence=phi), CODATA_2018)
    assert offset == pytest.approx(phi * PAIR.a / 2, rel=1e-6)
    assert 3e-4 <= offset <= 3e-3


def test_kinetic_phase_identity():
    omega_dt, k_dr = kinetic_phase_identity(STATE.speed, [0.0, 1e-3, 0.5], CODATA_2018)
    assert omega_dt == pytest.approx(k_dr, rel=1e-14)


def test_uniform_divergence_weights():
    samples = uniform_divergence(5e-3, 11)
    assert sum(w for _, w in samples) == pytest.approx(1.0)
    assert samples[0][0] == pytest.approx(-5e-3)
    assert uniform_divergence(5e-3, 1) == [(0.0, 1.0)]
    with pytest.raises(ValidationError):
        uniform_divergence(5e-3, 0)


def test_fringe_visibility_is_one_at_focusing_plane():
    distribution = uniform_divergence(5e-3, 201)
    result = fringe_visibility(PAIR, "parallelogram", Z_FOCUS, distribution, STATE, CODATA_2018)
    assert result.visibility == pytest.approx(1.0, abs=1e-9)
    assert result.profile_visibility == pytest.approx(1.0, abs=1e-4)
    assert len(result.y) == len(result.intensity) == 401


def test_fringe_visibility_drops_off_focus():
    distribution = uniform_divergence(5e-3, 201)
    values = [
        fringe_visibility(PAIR, "parallelogram", Z_FOCUS + dz, distribution, STATE, CODATA_2018).visibility
        for dz in (0.01, 0.02, 0.04)
    ]
    assert values[0] > values[1] > values[2]
    assert values[0] == pytest.approx(0.390, abs=0.002)


def test_fringe_visibility_rejects_empty_distribution():
    with pytest.raises(EmptyDistribution):
        fringe_visibility(PAIR, "parallelogram", Z_FOCUS, [], STATE, CODATA_2018)
    with pytest.raises(ValidationError):
        fringe_visibility(PAIR, "parallelogram", Z_FOCUS, [(0.0, 0.5)], STATE, CODATA_2018)


def test_exact_relative_phase_matches_first_order():
    exact = relative_phase_exact(PAIR, STATE, 5e-3, 1.0, CODATA_2018)
    first = phase_first_order(PAIR, "parallelogram", 5e-3, 1.0, 0.0, STATE, CODATA_2018)
    assert exact.relative == pytest.approx(first, rel=1e-5)
    assert exact.phase.order is None
    assert exact.entry_points.keys() == {s for s in exact.magnetic_phases}


def _oracle_terms(spec, state, y, z):
    exact = relative_phase_exact(spec, state, y, z, CODATA_2018).relative
    phi = state.divergence
    first = phase_first_order(spec, spec.geometry, y, z, phi, state, CODATA_2018)
    second = phase_second_order(spec, spec.geometry, y, z, phi, state, CODATA_2018)
    return exact - first, second


@pytest.mark.parametrize("geometry", ["parallelogram", "triangular"])
def test_exact_phase_residual_is_third_order(geometry):
    scales = (1.0, 0.5, 0.25, 0.125)
    residuals, second = zip(
        *(_oracle_terms(replace(STRONG, geometry=geometry).scaled(s), STATE, 5e-3, 1.0) for s in scales)
    )
    slope = np.polyfit(np.log(scales), np.log(np.abs(residuals)), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.2)
    assert list(residuals) == pytest.approx(list(second), rel=1e-3)


@pytest.mark.parametrize("geometry", ["parallelogram", "triangular"])
@pytest.mark.parametrize("y, z", [(5e-3, 1.0), (-3e-3, 0.5), (1e-2, 2.0)])
def test_second_order_phase_matches_exact_phase(geometry, y, z):
    residual, second = _oracle_terms(replace(STRONG, geometry=geometry), STATE, y, z)
    assert residual == pytest.approx(second, rel=1e-3)


@pytest.mark.parametrize("geometry", ["parallelogram", "triangular"])
def test_remainder_past_second_order_falls_faster_than_cube(geometry):
    slow = NeutronState.from_wavelength(3e-8)
    scales = (1.0, 0.5, 0.25, 0.125)
    remainders = []
    for s in scales:
        residual, second = _oracle_terms(replace(PAIR, geometry=geometry).scaled(s), slow, 5e-3, 1.0)
        remainders.append(residual - second)
    slope = np.polyfit(np.log(scales), np.log(np.abs(remainders)), 1)[0]
    assert slope > 3


@pytest.mark.parametrize("geometry", ["parallelogram", "triangular"])
def test_second_order_divergence_term(geometry):
    residual, second = _oracle_terms(replace(PAIR, geometry=geometry), STATE.with_entry(divergence=1e-4), 5e-3, 1.0)
    assert residual == pytest.approx(second, rel=1e-2)


def test_exact_phase_domain_checks():
    with pytest.raises(ValidationError):
        relative_phase_exact(PAIR, STATE, 0.0, 0.05, CODATA_2018)
    with pytest.raises(MissedAperture):
        relative_phase_exact(PAIR, STATE, 0.1, 1.0, CODATA_2018)


def test_second_order_coefficients():
    par = second_order_coefficients(PAIR, "parallelogram", 2e-3, 0.5)
    tri = second_order_coefficients(PAIR, "triangular", 2e-3, 0.5)
    assert par.A1 == tri.A1
    assert par.A1 == pytest.approx(PAIR.B1 * (7 * 2e-3 - 4 * 0.5 - PAIR.a))
    doubled = second_order_coefficients(PAIR.scaled(2.0), "parallelogram", 2e-3, 0.5)
    assert doubled.A12 == pytest.approx(2 * par.A12)
    assert doubled.A_phi == pytest.approx(2 * par.A_phi)
    # no field in the second prism: both layouts reduce to the first prism alone
    single = PAIR.with_fields(PAIR.B1, 0.0)
    assert phase_second_order(single, "parallelogram", 2e-3, 0.5, 1e-3, STATE, CODATA_2018) == pytest.approx(
        phase_second_order(single, "triangular", 2e-3, 0.5, 1e-3, STATE, CODATA_2018), rel=1e-12
    )
    with pytest.raises(ValidationError):
        second_order_coefficients(PAIR, "square", 0.0, 0.5)
