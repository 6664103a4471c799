import math
import os
import sys

sys.path.append(os.getcwd())

import numpy as np
import pytest

from core import (
    CODATA_2018,
    DegenerateDistances,
    InvalidLatticeIndex,
    NeutronState,
    SingularAxis,
    ValidationError,
    fringe_period,
)
from interferometry import unitarity_check
from textures import (
    KappaSpec,
    azimuthal_current,
    fields_for_cap,
    incident_spinor,
    kappa_from_fields,
    kicks_to_operator,
    momentum_components,
    momentum_kicks,
    oam_density,
    oam_density_numeric,
    oam_lattice_expansion,
    outgoing_spinors,
    pair_kappa,
    ring_spinors,
    solve_checkerboard_fields,
    spin_texture,
    texture_grid,
    u_pair,
    u_pair_composed,
)

STATE = NeutronState.from_wavelength(1e-9)
DISTANCES = (1.3, 0.9, 0.7, 0.3)


def test_checkerboard_fields_for_150_mT_cap():
    B1, B2, B3, B4 = fields_for_cap(0.150, *DISTANCES)
    assert (B1, B2, B3, B4) == pytest.approx((0.103846, 0.150, 0.0346154, 0.0807692), rel=1e-5)
    # each pair focuses on the common plane with the same field step
    assert B1 * 1.3 == pytest.approx(B2 * 0.9)
    assert B3 * 0.7 == pytest.approx(B4 * 0.3)
    assert B2 - B1 == pytest.approx(B4 - B3)


def test_checkerboard_period_is_145_microns():
    kappa = kappa_from_fields(fields_for_cap(0.150, *DISTANCES), STATE)
    assert kappa.kappa_x == pytest.approx(kappa.kappa_y)
    assert kappa.period_y == pytest.approx(145e-6, rel=0.03)


def test_period_equals_fringe_period():
    kappa = pair_kappa(0.10385, 0.15, STATE)
    assert math.pi / kappa == pytest.approx(fringe_period(1e-9, 0.10385, 0.15), rel=1e-12)


def test_solve_checkerboard_rejects_degenerate_distances():
    with pytest.raises(DegenerateDistances):
        solve_checkerboard_fields(0.1, 1.0, 1.0, 0.5, 0.2)
    with pytest.raises(ValidationError):
        solve_checkerboard_fields(0.1, 0.3, 0.7, 0.9, 1.3)
    assert solve_checkerboard_fields(0.1, *DISTANCES)[0] == pytest.approx(0.1 * 1.3 / 0.9)


def test_u_pair_matches_composed_single_pair_operators():
    rng = np.random.default_rng(3)
    for _ in range(50):
        kx, ky = rng.uniform(0, 3e4, size=2)
        x, y = rng.uniform(-2e-4, 2e-4, size=2)
        U = u_pair(kx, ky, x, y)
        assert U.allclose(u_pair_composed(kx, ky, x, y))
        assert unitarity_check(U) <= 1e-12


def test_spin_texture_matches_operator_expectation():
    rng = np.random.default_rng(11)
    for _ in range(100):
        kx, ky = rng.uniform(0, 3e4, size=2)
        theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
        x, y = rng.uniform(-2e-4, 2e-4, size=2)
        grid = spin_texture(KappaSpec(kx, ky), theta, phi, np.array([x]), np.array([y]))
        closed = [grid.components[f"sigma_{a}"][0, 0] for a in "xyz"]
        expected = u_pair(kx, ky, x, y).bloch_vector(incident_spinor(theta, phi))
        assert closed == pytest.approx(list(expected), abs=1e-12)


def test_bloch_vector_stays_normalized_on_grid():
    kappa = kappa_from_fields(fields_for_cap(0.150, *DISTANCES), STATE)
    x, y = texture_grid(kappa, grid=64, cells=2)
    assert x[-1] == pytest.approx(2 * math.pi / kappa.kappa_x)
    texture = spin_texture(kappa, math.pi / 3, 0.4, x, y)
    assert texture.shape == (64, 64)
    assert np.max(np.abs(texture.bloch_norm() - 1)) <= 1e-9
    assert len(texture.rows()) == 64 * 64


def test_zero_gradient_gives_constant_texture():
    kappa = KappaSpec(0.0, 0.0)
    x, y = texture_grid(kappa, grid=8)
    assert x[-1] == pytest.approx(1e-3)
    texture = spin_texture(kappa, math.pi / 2, 0.0, x, y)
    assert np.allclose(texture.components["sigma_x"], 1.0)
    assert np.allclose(texture.components["sigma_z"], 0.0)


def test_outgoing_spinors_shape():
    X, Y = np.meshgrid(np.linspace(-1e-4, 1e-4, 5), np.linspace(-1e-4, 1e-4, 3))
    psi = outgoing_spinors(KappaSpec(2e4, 1e4), 0.0, 0.0, X, Y)
    assert psi.shape == (2, 3, 5)
    assert np.allclose(np.sum(np.abs(psi) ** 2, axis=0), 1.0)


def test_oam_density_matches_finite_differences():
    kappa = KappaSpec(2.1e4, 1.7e4)
    x = np.linspace(-1e-4, 1e-4, 21)
    y = np.linspace(-1.5e-4, 1.5e-4, 17)
    closed = oam_density(kappa, STATE.wavenumber(CODATA_2018), 1.1, 0.6, x, y).components["L_z"]
    numeric = oam_density_numeric(kappa, 1.1, 0.6, x, y).components["L_z"]
    scale = np.max(np.abs(closed))
    assert np.max(np.abs(closed - numeric)) / scale <= 1e-6


def test_oam_carrier_subtraction():
    kappa = KappaSpec(2e4, 2e4)
    x = np.array([1e-4])
    y = np.array([2e-4])
    k0 = STATE.wavenumber(CODATA_2018)
    full = oam_density(kappa, k0, 0.0, 0.0, x, y)
    bare = oam_density(kappa, k0, 0.0, 0.0, x, y, subtract_carrier=True)
    assert full.components["L_x"][0, 0] - bare.components["L_x"][0, 0] == pytest.approx(k0 * 2e-4)
    assert full.components["L_y"][0, 0] - bare.components["L_y"][0, 0] == pytest.approx(-k0 * 1e-4)
    assert full.components["L_z"][0, 0] == bare.components["L_z"][0, 0]


def test_momentum_kicks_for_spin_up():
    kicks = momentum_kicks(1.0, 2.0, np.array([1.0, 0.0]))
    assert len(kicks) == 4
    plus = next(k for k in kicks if k.dkx > 0 and k.dky > 0)
    expected = np.array([np.exp(1j * math.pi / 4), np.exp(-1j * math.pi / 4)]) / (2 * math.sqrt(2))
    assert np.allclose(plus.amplitude, expected)
    with pytest.raises(ValidationError):
        momentum_kicks(1.0, 2.0, np.array([1.0, 1.0]))


def test_momentum_components_rebuild_u_pair():
    components = momentum_components(2e4, 1.3e4)
    for x, y in ((0.0, 0.0), (3e-5, -7e-5), (1.1e-4, 2e-5)):
        assert np.allclose(kicks_to_operator(components, x, y), u_pair(2e4, 1.3e4, x, y).matrix)
    assert len(momentum_components(0.0, 1e4)) == 2


@pytest.mark.parametrize(
    "m, n, family",
    [(0, 0, "integer"), (1, -1, "integer"), (0.5, 0.5, "half-odd"), (0.5, 1, "mixed"), (1, 0.5, "mixed")],
)
def test_lattice_expansion_is_second_order_accurate(m, n, family):
    kappa = 2e4
    expansion = oam_lattice_expansion(kappa, m, n)
    assert expansion.family == family
    assert abs(abs(expansion.global_phase) - 1) < 1e-12
    x_m, y_n = expansion.centre
    kr = 1e-2
    r = kr / kappa
    for azimuth in np.linspace(0, 2 * math.pi, 12, endpoint=False):
        exact = u_pair(kappa, kappa, x_m + r * math.cos(azimuth), y_n + r * math.sin(azimuth)).matrix
        assert np.max(np.abs(exact - expansion.evaluate(r, azimuth))) <= 5 * kr**2


def test_lattice_expansion_rejects_other_points():
    with pytest.raises(InvalidLatticeIndex):
        oam_lattice_expansion(2e4, 0.3, 0)


def test_azimuthal_current_of_vortex():
    samples = np.ones((2, 64), dtype=complex) / math.sqrt(2)
    current = azimuthal_current(samples, 1e-4, ell=1)
    expected = CODATA_2018.hbar / (CODATA_2018.neutron_mass * 1e-4)
    assert np.allclose(current, expected)
    with pytest.raises(SingularAxis):
        azimuthal_current(samples, 0.0)


def test_ring_spinors_are_normalized():
    ring = ring_spinors(KappaSpec(2e4, 2e4), 0.5, 0.2, (0.0, 0.0), 5e-5, count=32)
    assert ring.shape == (2, 32)
    assert np.allclose(np.sum(np.abs(ring) ** 2, axis=0), 1.0)
