"""Spin operators and phases of a prism pair in the two-path picture.

A pair acts on the spin as ``exp(i*zeta) * (cos(phi) + i*sin(phi)*sigma_n)``
where ``sigma_n`` is the Pauli matrix along the field axis.  ``phi`` is the
operator half-angle; the observable precession between the two spin
eigenstates is ``2*phi``.  Functions here return ``phi`` inside a
``PhaseResult`` and expose ``2*phi`` through ``PhaseResult.relative``.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from core import (
    BeamlineConfig,
    Constants,
    DegenerateFocusing,
    EmptyDistribution,
    MissedAperture,
    NeutronState,
    PrismPairSpec,
    Spin,
    ValidationError,
    deflection_magnitude,
)
from raytrace import entry_from_focus, field_layout, focus, trace_exact

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)

SPIN_UP_Z = np.array([1, 0], dtype=complex)
SPIN_DOWN_Z = np.array([0, 1], dtype=complex)

UNITARITY_TOLERANCE = 1e-12


def pauli(axis: Sequence[float]) -> np.ndarray:
    """``n . sigma`` for a unit 3-vector ``n``."""
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValidationError("Pauli axis must be a unit 3-vector")
    return n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z


@dataclass(frozen=True, eq=False)
class SpinOperator:
    """Complex 2x2 operator on the spin, with a separately tracked global phase."""

    matrix: np.ndarray
    global_phase: float = 0.0

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise ValidationError(f"spin operator must be 2x2, got shape {matrix.shape}")
        matrix = matrix.copy()
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls) -> "SpinOperator":
        return cls(IDENTITY)

    def full(self) -> np.ndarray:
        """Matrix including the global phase factor."""
        return cmath.exp(1j * self.global_phase) * self.matrix

    def dagger(self) -> "SpinOperator":
        return SpinOperator(self.matrix.conj().T, -self.global_phase)

    def __matmul__(self, other: Union["SpinOperator", np.ndarray]):
        if isinstance(other, SpinOperator):
            return SpinOperator(self.matrix @ other.matrix, self.global_phase + other.global_phase)
        return self.full() @ np.asarray(other, dtype=complex)

    def expectation(self, psi: np.ndarray, observable: np.ndarray) -> float:
        """``<psi| U^dagger O U |psi>`` for a Hermitian observable ``O``."""
        out = self.matrix @ np.asarray(psi, dtype=complex)
        return float(np.real(np.vdot(out, observable @ out)))

    def bloch_vector(self, psi: np.ndarray) -> np.ndarray:
        return np.array([self.expectation(psi, sigma) for sigma in PAULI])

    def allclose(self, other: "SpinOperator", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))


def larmor_operator(axis: Sequence[float], angle: float) -> SpinOperator:
    """``cos(angle) + i sin(angle) n.sigma``."""
    return SpinOperator(math.cos(angle) * IDENTITY + 1j * math.sin(angle) * pauli(axis))


def unitarity_check(U: Union[SpinOperator, np.ndarray]) -> float:
    """Largest entry of ``|U^dagger U - 1|``."""
    matrix = U.matrix if isinstance(U, SpinOperator) else np.asarray(U, dtype=complex)
    return float(np.max(np.abs(matrix.conj().T @ matrix - IDENTITY)))


def analyzer_intensity(
    U: SpinOperator, psi_in: np.ndarray, analyzer: Optional[np.ndarray] = None
) -> float:
    """Probability of passing an ideal analyzer after ``U``.

    The analyzer defaults to the incident polarization itself.
    """
    psi = np.asarray(psi_in, dtype=complex)
    target = psi if analyzer is None else np.asarray(analyzer, dtype=complex)
    target = target / np.linalg.norm(target)
    return float(abs(np.vdot(target, U @ psi)) ** 2)


@dataclass(frozen=True)
class PhaseResult:
    """Operator half-angle split into its Larmor and kinetic origins.

    ``order`` is the truncation order of the closed form that produced it,
    or ``None`` for the exact trace.
    """

    larmor: float
    kinetic: float
    global_phase: float = 0.0
    order: Optional[int] = 1

    @property
    def phase(self) -> float:
        return self.larmor + self.kinetic + self.global_phase

    @property
    def relative(self) -> float:
        return 2 * self.phase


def _scale(state: NeutronState, c: Constants) -> float:
    return c.moment_magnitude / (state.speed * c.hbar)


def _require_distinct(spec: PrismPairSpec) -> None:
    if spec.B1 == spec.B2:
        raise DegenerateFocusing("B1 == B2: no focusing plane")


def larmor_phase_straight(
    spec: PrismPairSpec,
    geometry: str,
    y0: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> float:
    """Larmor half-angle along the undeflected ray entering at ``y0``."""
    field_layout(geometry)
    B1, B2, a = spec.B1, spec.B2, spec.a
    scale = _scale(state, c)
    offset = (B1 * a - B2 * (3 * a + 2 * spec.gap)) * divergence
    if geometry == "parallelogram":
        return scale * (2 * (B1 - B2) * (1 + divergence) * y0 + offset)
    return scale * (2 * (B1 - B2) * y0 + 2 * (B1 + B2) * y0 * divergence + offset)


def phase_on_focus(
    spec: PrismPairSpec,
    geometry: str,
    y_f: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> PhaseResult:
    """Half-angle at the focal point ``y_f``.

    Both geometries give ``2|mu|(B1 - B2) y_f / (v0 hbar)``.  The Larmor part
    is the straight-path integral from the matching entry point; the rest is
    kinetic.
    """
    _require_distinct(spec)
    total = 2 * _scale(state, c) * (spec.B1 - spec.B2) * y_f
    y0 = entry_from_focus(spec, geometry, y_f, divergence)
    larmor = larmor_phase_straight(spec, geometry, y0, divergence, state, c)
    return PhaseResult(larmor=larmor, kinetic=total - larmor)


def defocus_moment(spec: PrismPairSpec, z: float) -> float:
    """``B1*L1 - B2*L2`` for a detector at ``z`` in the pair frame."""
    return z * (spec.B1 - spec.B2) + spec.separation * spec.B2


def _off_focus_total(
    spec: PrismPairSpec, geometry: str, y: float, z: float, divergence: float, scale: float
) -> float:
    B1, B2 = spec.B1, spec.B2
    defocus = -2 * scale * defocus_moment(spec, z) * divergence
    if geometry == "parallelogram":
        return 2 * scale * (B1 - B2) * (1 + divergence) * y + defocus
    return 2 * scale * (B1 - B2) * y + 2 * scale * (B1 + B2) * y * divergence + defocus


def phase_off_focus(
    spec: PrismPairSpec,
    geometry: str,
    y: float,
    z: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> PhaseResult:
    """Half-angle at an arbitrary detector point ``(y, z)`` in the pair frame.

    The Larmor part is evaluated along the straight ray traced back from
    ``(y, z)`` to the entry face at the incident divergence.
    """
    field_layout(geometry)
    total = _off_focus_total(spec, geometry, y, z, divergence, _scale(state, c))
    y_mean = y - divergence * (z + spec.a / 2)
    larmor = larmor_phase_straight(spec, geometry, y_mean, divergence, state, c)
    return PhaseResult(larmor=larmor, kinetic=total - larmor)


def phase_first_order(
    spec: PrismPairSpec,
    geometry: str,
    y: float,
    z: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> float:
    """Single-path Larmor model relative phase at ``(y, z)``."""
    field_layout(geometry)
    B1, B2 = spec.B1, spec.B2
    scale = _scale(state, c)
    L1 = z
    L2 = z - spec.separation
    defocus = 4 * scale * (B1 * L1 - B2 * L2) * divergence
    if geometry == "parallelogram":
        return 4 * scale * (B1 - B2) * (1 + divergence) * y - defocus
    return 4 * scale * ((B1 - B2) + (B1 + B2) * divergence) * y - defocus


@dataclass(frozen=True)
class SecondOrderCoefficients:
    """Field-weighted lengths (T m) of the cubic relative-phase terms.

    ``A1``, ``A12`` and ``A2`` multiply ``alpha1**2``, ``alpha1*alpha2`` and
    ``alpha2**2``; ``A_phi`` multiplies ``divergence**2``.  Terms linear in
    both a deflection and the divergence are already exact in the first-order
    phase, and terms even in the fields cancel between the two spins.
    """

    A1: float
    A12: float
    A2: float
    A_phi: float


def second_order_coefficients(
    spec: PrismPairSpec, geometry: str, y: float, z: float
) -> SecondOrderCoefficients:
    """Coefficients of the third-order-in-angle relative phase at ``(y, z)``.

    They are the series of the stationary path phase of each spin (incident
    phase plus ``k n`` integrated over the refracted ray) taken to third order
    in the deflections and the divergence, with ``z`` and ``y`` in the pair
    frame.
    """
    field_layout(geometry)
    B1, B2, a = spec.B1, spec.B2, spec.a
    L2 = z - spec.separation
    A1 = B1 * (7 * y - 4 * z - a)
    if geometry == "parallelogram":
        return SecondOrderCoefficients(
            A1=A1,
            A12=4 * (B1 - B2) * (3 * L2 - 4 * y) - 2 * a * B2,
            A2=B2 * (4 * L2 - 7 * y + a),
            A_phi=4 * B1 * (3 * y - 2 * z) - 4 * B2 * (3 * y - 2 * L2),
        )
    return SecondOrderCoefficients(
        A1=A1,
        A12=-4 * B1 * (L2 + 2 * y) + 2 * B2 * (6 * L2 + 8 * y + a),
        A2=-B2 * (4 * L2 + 7 * y + a),
        A_phi=4 * B1 * (3 * y - 2 * z) - 4 * B2 * (3 * y + 2 * L2),
    )


def phase_second_order(
    spec: PrismPairSpec,
    geometry: str,
    y: float,
    z: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> float:
    """Third-order correction to :func:`phase_first_order` at ``(y, z)``."""
    coeff = second_order_coefficients(spec, geometry, y, z)
    a1 = deflection_magnitude(spec.B1, state.speed, c)
    a2 = deflection_magnitude(spec.B2, state.speed, c)
    return _scale(state, c) / 2 * (
        coeff.A1 * a1**2
        + coeff.A12 * a1 * a2
        + coeff.A2 * a2**2
        + coeff.A_phi * divergence**2
    )


def pair_unitary(
    spec: PrismPairSpec,
    geometry: str,
    y: float,
    z: Optional[float],
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> SpinOperator:
    """Spin operator of one pair at the focal point ``y`` or at ``(y, z)``."""
    if z is None:
        half = phase_on_focus(spec, geometry, y, divergence, state, c).phase
    else:
        half = phase_off_focus(spec, geometry, y, z, divergence, state, c).phase
    return larmor_operator(spec.field_axis, half)


def coherence_requirements(
    spec: PrismPairSpec,
    geometry: str,
    y: float,
    z: float,
    divergence: float,
    state: NeutronState,
    c: Constants,
) -> Tuple[float, float]:
    """Initial separations ``(dz0, dy0)`` of the two spin states meeting at ``(y, z)``.

    Both are first order in the deflections; the divergence only enters at
    higher order.
    """
    field_layout(geometry)
    a1 = deflection_magnitude(spec.B1, state.speed, c)
    a2 = deflection_magnitude(spec.B2, state.speed, c)
    dz0 = 2 * y * (a2 - a1)
    D = spec.separation
    if geometry == "parallelogram":
        dy0 = 2 * ((y - z) * (a1 - a2) - D * a2)
    else:
        dy0 = 2 * ((y - z) * a1 + (y + z) * a2 - D * a2)
    return dz0, dy0


def focal_plane_discrepancy(
    spec: PrismPairSpec, geometry: str, state: NeutronState, c: Constants
) -> float:
    """Largest ``z`` offset between geometric and phase focal planes across the aperture.

    The phase focal plane is where the divergence term of the off-focus
    phase vanishes; the geometric one is where the two spin rays cross.
    """
    field_layout(geometry)
    _require_distinct(spec)
    B1, B2, D = spec.B1, spec.B2, spec.separation
    shaped = replace(spec, geometry=geometry)
    worst = 0.0
    for y0 in (-spec.a / 2, spec.a / 2):
        y_f, z_f = focus(shaped, state.with_entry(y0=y0), c)
        if geometry == "parallelogram":
            z_phase = y_f - D * B2 / (B1 - B2)
        else:
            z_phase = ((B1 + B2) * y_f - D * B2) / (B1 - B2)
        worst = max(worst, abs(z_f - z_phase))
    return worst


def kinetic_phase_identity(speed: float, displacement, c: Constants) -> Tuple[float, float]:
    """Return ``(omega * dt, k * |dr| / 2)`` for a free straight segment."""
    length = float(np.linalg.norm(np.atleast_1d(np.asarray(displacement, dtype=float))))
    omega = c.neutron_mass * speed**2 / (2 * c.hbar)
    k = c.neutron_mass * speed / c.hbar
    return omega * (length / speed), k * length / 2


def uniform_divergence(half_width: float, count: int) -> List[Tuple[float, float]]:
    """Equal-weight samples spread uniformly over ``[-half_width, half_width]``."""
    if count < 1:
        raise ValidationError("divergence sample count must be at least 1")
    if half_width < 0:
        raise ValidationError("divergence half width must be non-negative")
    if count == 1:
        return [(0.0, 1.0)]
    angles = np.linspace(-half_width, half_width, count)
    return [(float(phi), 1.0 / count) for phi in angles]


@dataclass(frozen=True)
class FringeResult:
    """Visibility of the ensemble fringe and the sampled intensity over one period.

    ``visibility`` is the modulus of the weighted fringe phasor at the fringe
    centre; ``profile_visibility`` is the contrast of the sampled profile.
    """

    visibility: float
    profile_visibility: float
    y: np.ndarray
    intensity: np.ndarray


def _check_distribution(distribution: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    if len(distribution) == 0:
        raise EmptyDistribution("divergence distribution is empty")
    angles = np.array([phi for phi, _ in distribution], dtype=float)
    weights = np.array([w for _, w in distribution], dtype=float)
    if np.any(weights < 0):
        raise ValidationError("divergence weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValidationError(f"divergence weights must sum to 1, got {weights.sum()}")
    return angles, weights


def fringe_visibility(
    spec: PrismPairSpec,
    geometry: str,
    z: float,
    distribution: Sequence[Tuple[float, float]],
    state: NeutronState,
    c: Constants,
    samples: int = 401,
) -> FringeResult:
    """Fringe contrast of an incoherent divergence ensemble at detector ``z``.

    Intensities follow an analyzer aligned with the incident polarization:
    ``I(y) = sum w (1 + cos(2 phi(y, z, divergence))) / 2``.
    """
    field_layout(geometry)
    _require_distinct(spec)
    angles, weights = _check_distribution(distribution)
    scale = _scale(state, c)
    centre = np.array(
        [2 * _off_focus_total(spec, geometry, 0.0, z, phi, scale) for phi in angles]
    )
    visibility = float(abs(np.sum(weights * np.exp(1j * centre))))

    period = math.pi / (2 * scale * abs(spec.B1 - spec.B2))
    n = samples if samples % 2 else samples + 1
    ys = np.linspace(-period / 2, period / 2, n)
    intensity = np.zeros_like(ys)
    for phi, w in zip(angles, weights):
        relative = 2 * _off_focus_total(spec, geometry, ys, z, phi, scale)
        intensity += w * (1 + np.cos(relative)) / 2
    top, bottom = float(intensity.max()), float(intensity.min())
    profile = (top - bottom) / (top + bottom) if top + bottom > 0 else 0.0
    return FringeResult(visibility=min(visibility, 1.0), profile_visibility=profile, y=ys, intensity=intensity)


@dataclass(frozen=True)
class ExactPhase:
    """Relative phase from the exact trace.

    ``phase`` holds the half-angle with its Larmor and kinetic parts;
    ``global_phase`` is the spin-symmetric part ``zeta`` of the two path
    phases, measured against the free plane wave.
    """

    phase: PhaseResult
    global_phase: float
    entry_points: Dict[Spin, float]
    magnetic_phases: Dict[Spin, float]

    @property
    def relative(self) -> float:
        return self.phase.relative


def _exact_path_phase(
    spec: PrismPairSpec, state: NeutronState, y: float, z: float, spin: Spin, c: Constants
) -> Tuple[float, float, float]:
    config = BeamlineConfig(pairs=(replace(spec, L1=None),), detector_z=z, constants=c)

    def landing(u: float):
        return trace_exact(config, state.with_entry(y0=float(u)), spin, c).paths[spin]

    def miss(u: float) -> float:
        return landing(u).end[1] - y

    guess = y - state.divergence * (z + spec.a / 2)
    u_s = float(
        optimize.newton(miss, guess, x1=guess + 1e-7, tol=1e-16, maxiter=60, disp=False)
    )
    path = landing(u_s)
    u_f = path.end[1]
    if abs(u_f - y) > 1e-9:
        logging.warning("Exact landing for %s missed y=%s by %s m", spin.label, y, u_f - y)
    k0 = state.wavenumber(c)
    direction = math.sin(path.segments[-1].angle)
    action = (
        k0 * math.sin(state.divergence) * u_s
        + k0 * state.speed * path.time_excess
        + 2 * path.magnetic_phase
        + k0 * direction * (y - u_f)
    )
    return action, path.magnetic_phase, u_s


def relative_phase_exact(
    spec: PrismPairSpec, state: NeutronState, y: float, z: float, c: Constants
) -> ExactPhase:
    """Relative phase of the two spin paths meeting at ``(y, z)``, from exact rays.

    Each path phase is the abbreviated action at fixed energy measured
    against the free plane wave: the incident phase at its entry point,
    ``k0 v0`` times its time excess and twice its magnetic phase.  The entry
    point of each spin is found by a secant search on the landing position.

    Raises:
        MissedAperture: If no entry ray reaches ``(y, z)`` through the pair.
    """
    if z < spec.separation + spec.a / 2:
        raise ValidationError("detector plane must lie past the second prism")
    if spec.transverse_axis != (0.0, 1.0, 0.0):
        raise ValidationError("exact phases are evaluated for a pair refracting along +y")
    actions: Dict[Spin, float] = {}
    magnetic: Dict[Spin, float] = {}
    entries: Dict[Spin, float] = {}
    for spin in (Spin.UP, Spin.DOWN):
        try:
            actions[spin], magnetic[spin], entries[spin] = _exact_path_phase(
                spec, state, y, z, spin, c
            )
        except MissedAperture:
            logging.error("No %s ray reaches y=%s, z=%s", spin.label, y, z)
            raise
    half = (actions[Spin.UP] - actions[Spin.DOWN]) / 2
    larmor = (magnetic[Spin.UP] - magnetic[Spin.DOWN]) / 2
    zeta = (actions[Spin.UP] + actions[Spin.DOWN]) / 2
    return ExactPhase(
        phase=PhaseResult(larmor=larmor, kinetic=half - larmor, order=None),
        global_phase=zeta,
        entry_points=entries,
        magnetic_phases=magnetic,
    )
