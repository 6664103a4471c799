import math
import os
import sys
from dataclasses import replace

sys.path.append(os.getcwd())

import numpy as np
import pytest

from core import (
    CODATA_2018,
    BeamlineConfig,
    DegenerateFocusing,
    MissedAperture,
    NeutronState,
    PrismPairSpec,
    Spin,
    ValidationError,
    deflection_magnitude,
)
from raytrace import (
    arrival_times,
    deflection_chain,
    entry_from_focus,
    exact_focus,
    field_layout,
    focus,
    focus_parallelogram,
    focus_triangular,
    focusing_locus_slope,
    hypotenuse_crossings,
    trace_exact,
)

PAIR = PrismPairSpec(a=0.04, gap=0.0, B1=0.10385, B2=0.15)
TRIANGULAR = replace(PAIR, geometry="triangular")
STATE = NeutronState.from_wavelength(1e-9)
Z_FOCUS = -PAIR.separation * PAIR.B2 / (PAIR.B1 - PAIR.B2)


def test_field_layout_signs():
    assert field_layout("parallelogram") == ((-1, 1), (1, -1))
    assert field_layout("triangular") == ((-1, 1), (-1, 1))
    with pytest.raises(ValidationError):
        field_layout("square")


def test_parallelogram_focus_on_axis():
    y_f, z_f, x_f = focus_parallelogram(PAIR, STATE, CODATA_2018)
    assert y_f == pytest.approx(0.0, abs=1e-15)
    assert z_f == pytest.approx(Z_FOCUS, rel=1e-12)
    assert x_f == 0.0


def test_focusing_locus_slopes():
    assert focusing_locus_slope(PAIR) == 1.0
    triangular = PrismPairSpec(a=0.04, gap=0.0, B1=0.10385, B2=0.15, geometry="triangular")
    slope = focusing_locus_slope(triangular)
    assert slope == pytest.approx((0.10385 + 0.15) / (0.10385 - 0.15))
    z0 = focus_triangular(triangular, STATE, CODATA_2018)[1]
    z1 = focus_triangular(triangular, STATE.with_entry(y0=1e-3), CODATA_2018)[1]
    assert (z1 - z0) / 1e-3 == pytest.approx(slope, rel=1e-9)


def test_equal_fields_have_no_focus():
    with pytest.raises(DegenerateFocusing):
        focus(PAIR.with_fields(0.1, 0.1), STATE, CODATA_2018)


def test_entry_from_focus_inverts_focus():
    state = STATE.with_entry(y0=1e-3, divergence=2e-3)
    y_f, _ = focus(PAIR, state, CODATA_2018)
    assert entry_from_focus(PAIR, "parallelogram", y_f, 2e-3) == pytest.approx(1e-3, abs=2e-6)
    assert entry_from_focus(PAIR, "parallelogram", y_f, 0.0) == y_f


def test_arrival_time_difference():
    state = STATE.with_entry(y0=3e-3)
    t_up, t_down = arrival_times(PAIR, "parallelogram", state, CODATA_2018)
    a1 = deflection_magnitude(PAIR.B1, STATE.speed)
    a2 = deflection_magnitude(PAIR.B2, STATE.speed)
    assert STATE.speed * (t_up - t_down) == pytest.approx(2 * 3e-3 * (a2 - a1), rel=1e-6)


def test_deflection_chain_is_antisymmetric_to_first_order():
    chains = deflection_chain(PAIR, STATE, CODATA_2018)
    up = chains[Spin.UP].ray_angles[-1]
    down = chains[Spin.DOWN].ray_angles[-1]
    assert up == pytest.approx(-down, rel=1e-3)
    a1 = deflection_magnitude(PAIR.B1, STATE.speed)
    a2 = deflection_magnitude(PAIR.B2, STATE.speed)
    assert abs(up) == pytest.approx(abs(a2 - a1), rel=1e-3)


def test_hypotenuse_crossings_start_on_entry_ray():
    state = STATE.with_entry(y0=2e-3)
    first, second = hypotenuse_crossings(PAIR, state, Spin.UP, CODATA_2018)
    assert first == (2e-3, 2e-3)
    # second crossing lies on z = u + D
    assert second[1] == pytest.approx(second[0] + PAIR.separation, rel=1e-12)


def test_exact_trace_matches_closed_form_focus():
    config = BeamlineConfig(pairs=(PAIR,), detector_z=0.2)
    result = trace_exact(config, STATE)
    assert set(result.paths) == {Spin.UP, Spin.DOWN}
    y_f, z_f = result.focus
    assert z_f == pytest.approx(Z_FOCUS, rel=1e-4)
    assert y_f == pytest.approx(0.0, abs=1e-7)
    for path in result.paths.values():
        assert len(path.crossings) == 2
        assert path.end[2] == pytest.approx(0.2)
        assert path.segments[0].region == "pair1.prism1.first"
        assert path.arrival_time == pytest.approx((0.2 + PAIR.a / 2) / STATE.speed, rel=1e-6)


def test_exact_trace_reports_missed_aperture():
    config = BeamlineConfig(pairs=(PAIR,), detector_z=0.2)
    with pytest.raises(MissedAperture):
        trace_exact(config, STATE.with_entry(y0=0.05))


def test_larmor_phase_of_straight_ray():
    config = BeamlineConfig(pairs=(PAIR,), detector_z=0.2)
    path = trace_exact(config, STATE.with_entry(y0=2e-3), Spin.UP).paths[Spin.UP]
    scale = CODATA_2018.moment_magnitude / (STATE.speed * CODATA_2018.hbar)
    assert path.magnetic_phase == pytest.approx(2 * scale * (PAIR.B1 - PAIR.B2) * 2e-3, rel=1e-3)


def test_exact_focus_agrees_with_first_order():
    for spec in (PAIR, TRIANGULAR):
        for y0 in (0.0, 4e-3):
            state = STATE.with_entry(y0=y0)
            oracle = exact_focus(spec, state, CODATA_2018)
            y_f, z_f = focus(spec, state, CODATA_2018)
            assert oracle.z_f == pytest.approx(z_f, rel=1e-4)
            assert oracle.y_f == pytest.approx(y_f, abs=1e-7)
            t_up, t_down = arrival_times(spec, spec.geometry, state, CODATA_2018)
            dt = oracle.arrival_times[Spin.UP] - oracle.arrival_times[Spin.DOWN]
            if y0:
                assert dt == pytest.approx(t_up - t_down, rel=1e-3)
            else:
                assert abs(dt) < 1e-15


def test_triangular_focus_error_is_second_order():
    scales = (1.0, 0.5, 0.25, 0.125)
    misses = []
    for scale in scales:
        spec = TRIANGULAR.scaled(10.0 * scale)
        oracle = exact_focus(spec, STATE, CODATA_2018)
        y_f, z_f = focus_triangular(spec, STATE, CODATA_2018)
        misses.append(math.hypot(oracle.y_f - y_f, oracle.z_f - z_f))
    slope = np.polyfit(np.log(scales), np.log(misses), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)
    assert max(misses) < 1e-7


def test_entry_from_focus_round_trip_is_second_order_in_divergence():
    divergences = (4e-3, 2e-3, 1e-3, 5e-4)
    for spec in (PAIR, TRIANGULAR):
        misses = []
        for phi in divergences:
            y_f, _ = focus(spec, STATE.with_entry(y0=1e-3, divergence=phi), CODATA_2018)
            y0 = entry_from_focus(spec, spec.geometry, y_f, phi)
            y_back, _ = focus(spec, STATE.with_entry(y0=y0, divergence=phi), CODATA_2018)
            misses.append(abs(y_back - y_f))
        slope = np.polyfit(np.log(divergences), np.log(misses), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.05)
