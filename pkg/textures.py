"""Spin textures and orbital angular momentum from two crossed prism pairs.

The first pair has its field along ``x`` and imprints a phase ``kappa_y * y``;
the second has its field along ``y`` and imprints ``-kappa_x * x`` (its
transverse coordinate is ``z_hat x y_hat = -x_hat``).  Grids use
``numpy.meshgrid`` with ``indexing="xy"``, so arrays are shaped
``(len(y), len(x))``.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import (
    CODATA_2018,
    Constants,
    DegenerateDistances,
    InvalidLatticeIndex,
    NeutronState,
    SingularAxis,
    ValidationError,
)
from interferometry import (
    IDENTITY,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SpinOperator,
    larmor_operator,
)

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

SPIN_FACTORS = {
    "1": IDENTITY,
    "sigma+": SIGMA_PLUS,
    "sigma-": SIGMA_MINUS,
    "sigma_z": SIGMA_Z,
}

DEFAULT_GRID = 256
DEFAULT_EXTENT = 1e-3


@dataclass(frozen=True)
class KappaSpec:
    """Transverse phase gradients of the two pairs (rad/m)."""

    kappa_x: float
    kappa_y: float
    geometry: str = "parallelogram"
    fields: Tuple[float, ...] = ()
    divergence: float = 0.0

    def __post_init__(self) -> None:
        if self.kappa_x < 0 or self.kappa_y < 0:
            raise ValidationError("phase gradients are magnitudes and must be non-negative")

    @property
    def period_x(self) -> float:
        return math.pi / self.kappa_x if self.kappa_x else math.inf

    @property
    def period_y(self) -> float:
        return math.pi / self.kappa_y if self.kappa_y else math.inf


def pair_kappa(
    B_first: float,
    B_second: float,
    state: NeutronState,
    c: Constants = CODATA_2018,
    geometry: str = "parallelogram",
    divergence: float = 0.0,
) -> float:
    """Phase gradient of a single pair for the given divergence."""
    scale = 2 * c.moment_magnitude / (state.speed * c.hbar)
    if geometry == "parallelogram":
        return scale * abs(B_first - B_second) * (1 + divergence)
    if geometry == "triangular":
        return scale * abs(B_first - B_second) + scale * (B_first + B_second) * divergence
    raise ValidationError(f"unknown geometry {geometry!r}")


def kappa_from_fields(
    fields: Sequence[float],
    state: NeutronState,
    c: Constants = CODATA_2018,
    geometry: str = "parallelogram",
    divergence: float = 0.0,
) -> KappaSpec:
    """Build both gradients from ``(B1, B2, B3, B4)``.

    ``B1, B2`` belong to the x-field pair and set ``kappa_y``; ``B3, B4``
    belong to the y-field pair and set ``kappa_x``.
    """
    if len(fields) != 4:
        raise ValidationError("two crossed pairs need four fields B1..B4")
    B1, B2, B3, B4 = (float(b) for b in fields)
    return KappaSpec(
        kappa_x=pair_kappa(B3, B4, state, c, geometry, divergence),
        kappa_y=pair_kappa(B1, B2, state, c, geometry, divergence),
        geometry=geometry,
        fields=(B1, B2, B3, B4),
        divergence=divergence,
    )


def solve_checkerboard_fields(
    B1: float, L1: float, L2: float, L3: float, L4: float
) -> Tuple[float, float, float]:
    """Fields ``(B2, B3, B4)`` focusing both pairs on one plane with equal ``|dB|``.

    Raises:
        DegenerateDistances: If ``L1 == L2`` or ``L3 == L4``.
    """
    if L1 == L2 or L3 == L4:
        raise DegenerateDistances("prism distances of a pair must differ")
    if not B1 > 0:
        raise ValidationError(f"B1 must be positive, got {B1}")
    if not L1 > L2 > L3 > L4 > 0:
        raise ValidationError("distances must satisfy L1 > L2 > L3 > L4 > 0")
    B2 = B1 * L1 / L2
    B3 = B1 * L4 * (L1 - L2) / (L2 * (L3 - L4))
    B4 = B1 * L3 * (L1 - L2) / (L2 * (L3 - L4))
    return B2, B3, B4


def fields_for_cap(cap: float, L1: float, L2: float, L3: float, L4: float) -> Tuple[float, float, float, float]:
    """Checkerboard fields scaled so that the strongest one equals ``cap``."""
    if not cap > 0:
        raise ValidationError(f"field cap must be positive, got {cap}")
    B2, B3, B4 = solve_checkerboard_fields(1.0, L1, L2, L3, L4)
    scale = cap / max(1.0, B2, B3, B4)
    return scale, B2 * scale, B3 * scale, B4 * scale


def u_pair(kappa_x: float, kappa_y: float, x: float, y: float) -> SpinOperator:
    """Spin operator of the two crossed pairs at detector point ``(x, y)``."""
    c1, s1 = math.cos(kappa_x * x), math.sin(kappa_x * x)
    c2, s2 = math.cos(kappa_y * y), math.sin(kappa_y * y)
    return SpinOperator(
        np.array(
            [
                [c1 * c2 - 1j * s1 * s2, 1j * c1 * s2 - s1 * c2],
                [s1 * c2 + 1j * c1 * s2, c1 * c2 + 1j * s1 * s2],
            ]
        )
    )


def u_pair_composed(kappa_x: float, kappa_y: float, x: float, y: float) -> SpinOperator:
    """``U_y @ U_x`` built from the single-pair operators."""
    first = larmor_operator((1.0, 0.0, 0.0), kappa_y * y)
    second = larmor_operator((0.0, 1.0, 0.0), -kappa_x * x)
    return second @ first


def _u_pair_grid(kappa_x: float, kappa_y: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    c1, s1 = np.cos(kappa_x * X), np.sin(kappa_x * X)
    c2, s2 = np.cos(kappa_y * Y), np.sin(kappa_y * Y)
    return np.array(
        [
            [c1 * c2 - 1j * s1 * s2, 1j * c1 * s2 - s1 * c2],
            [s1 * c2 + 1j * c1 * s2, c1 * c2 + 1j * s1 * s2],
        ]
    )


def incident_spinor(theta_in: float, phi_in: float) -> np.ndarray:
    return np.array(
        [math.cos(theta_in / 2), cmath.exp(1j * phi_in) * math.sin(theta_in / 2)], dtype=complex
    )


@dataclass
class FieldGrid:
    """Sampled maps over the detector plane.

    ``components`` maps a column name (``sigma_x``, ``L_z``, ...) to an array
    of shape ``(len(y), len(x))``.
    """

    x: np.ndarray
    y: np.ndarray
    components: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.y), len(self.x)

    def bloch_norm(self) -> np.ndarray:
        return np.sqrt(sum(self.components[f"sigma_{a}"] ** 2 for a in "xyz"))

    def rows(self) -> List[Tuple[float, ...]]:
        """Flattened ``(x, y, *components)`` rows, ``y`` varying slowest."""
        names = list(self.components)
        X, Y = np.meshgrid(self.x, self.y, indexing="xy")
        columns = [X.ravel(), Y.ravel()] + [self.components[n].ravel() for n in names]
        return [tuple(float(v) for v in row) for row in zip(*columns)]


def texture_grid(
    kappa: KappaSpec,
    grid: int = DEFAULT_GRID,
    cells: int = 1,
    extent: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample coordinates spanning ``[-cells*pi/kappa, cells*pi/kappa]`` on each axis."""
    if grid < 2:
        raise ValidationError("grid needs at least two samples per axis")
    if cells < 1:
        raise ValidationError("cells must be at least 1")

    def half_width(k: float) -> float:
        if extent is not None:
            return extent
        if k == 0:
            logging.warning("Zero phase gradient; sampling +/- %s m instead of a unit cell", DEFAULT_EXTENT)
            return DEFAULT_EXTENT
        return cells * math.pi / k

    hx, hy = half_width(kappa.kappa_x), half_width(kappa.kappa_y)
    return np.linspace(-hx, hx, grid), np.linspace(-hy, hy, grid)


def outgoing_spinors(
    kappa: KappaSpec, theta_in: float, phi_in: float, X: np.ndarray, Y: np.ndarray
) -> np.ndarray:
    """``psi_d = u_pair psi_in`` at every point; shape ``(2,) + X.shape``."""
    U = _u_pair_grid(kappa.kappa_x, kappa.kappa_y, X, Y)
    psi = incident_spinor(theta_in, phi_in)
    return np.einsum("ij...,j->i...", U, psi)


def spin_texture(
    kappa: KappaSpec, theta_in: float, phi_in: float, x: np.ndarray, y: np.ndarray
) -> FieldGrid:
    """Bloch vector of the outgoing spinor over a grid, from the closed forms."""
    X, Y = np.meshgrid(np.asarray(x, dtype=float), np.asarray(y, dtype=float), indexing="xy")
    cx, sx = np.cos(2 * kappa.kappa_x * X), np.sin(2 * kappa.kappa_x * X)
    cy, sy = np.cos(2 * kappa.kappa_y * Y), np.sin(2 * kappa.kappa_y * Y)
    st, ct = math.sin(theta_in), math.cos(theta_in)
    sp, cp = math.sin(phi_in), math.cos(phi_in)
    tilted = ct * cy - st * sp * sy
    return FieldGrid(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        components={
            "sigma_x": st * cp * cx + sx * tilted,
            "sigma_y": st * sp * cy + ct * sy,
            "sigma_z": -st * cp * sx + cx * tilted,
            "phase_x": 2 * kappa.kappa_x * X,
            "phase_y": 2 * kappa.kappa_y * Y,
        },
    )


def oam_density(
    kappa: KappaSpec,
    k0z: float,
    theta_in: float,
    phi_in: float,
    x: np.ndarray,
    y: np.ndarray,
    divergence: Optional[float] = None,
    subtract_carrier: bool = False,
) -> FieldGrid:
    """OAM density ``psi_d^* (r x p) psi_d / hbar`` about the detector centre.

    Densities are per unit ``|psi|^2``.  With ``subtract_carrier`` the
    ``k0z * y`` and ``-k0z * x`` terms of the forward beam are dropped.
    """
    phi = kappa.divergence if divergence is None else divergence
    X, Y = np.meshgrid(np.asarray(x, dtype=float), np.asarray(y, dtype=float), indexing="xy")
    st, ct = math.sin(theta_in), math.cos(theta_in)
    sp, cp = math.sin(phi_in), math.cos(phi_in)
    sigma_y = st * sp * np.cos(2 * kappa.kappa_y * Y) + ct * np.sin(2 * kappa.kappa_y * Y)
    transverse = (kappa.kappa_y * st * cp + kappa.kappa_x * sigma_y) / (1 + phi)
    carrier = 0.0 if subtract_carrier else k0z
    return FieldGrid(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        components={
            "L_x": carrier * Y + Y * transverse,
            "L_y": -carrier * X - X * transverse,
            "L_z": kappa.kappa_y * X * st * cp + kappa.kappa_x * Y * sigma_y,
        },
    )


def oam_density_numeric(
    kappa: KappaSpec,
    theta_in: float,
    phi_in: float,
    x: np.ndarray,
    y: np.ndarray,
    step: Optional[float] = None,
) -> FieldGrid:
    """Transverse momenta and ``L_z`` from central differences of ``psi_d``."""
    k_max = max(kappa.kappa_x, kappa.kappa_y)
    h = step if step is not None else (1e-4 / k_max if k_max else 1e-9)
    X, Y = np.meshgrid(np.asarray(x, dtype=float), np.asarray(y, dtype=float), indexing="xy")
    psi = outgoing_spinors(kappa, theta_in, phi_in, X, Y)
    d_x = (outgoing_spinors(kappa, theta_in, phi_in, X + h, Y)
           - outgoing_spinors(kappa, theta_in, phi_in, X - h, Y)) / (2 * h)
    d_y = (outgoing_spinors(kappa, theta_in, phi_in, X, Y + h)
           - outgoing_spinors(kappa, theta_in, phi_in, X, Y - h)) / (2 * h)
    p_x = np.real(np.sum(np.conj(psi) * (-1j) * d_x, axis=0))
    p_y = np.real(np.sum(np.conj(psi) * (-1j) * d_y, axis=0))
    return FieldGrid(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        components={"p_x": p_x, "p_y": p_y, "L_z": X * p_y - Y * p_x},
    )


@dataclass(frozen=True, eq=False)
class MomentumKick:
    """One transverse plane-wave component ``exp(i(dkx x + dky y)) * amplitude``.

    ``amplitude`` is a spinor for :func:`momentum_kicks` and a 2x2 matrix for
    :func:`momentum_components`.
    """

    dkx: float
    dky: float
    amplitude: np.ndarray


_KICK_X = {1: (IDENTITY - SIGMA_Y) / 2, -1: (IDENTITY + SIGMA_Y) / 2}
_KICK_Y = {1: (IDENTITY + SIGMA_X) / 2, -1: (IDENTITY - SIGMA_X) / 2}


def momentum_components(kappa_x: float, kappa_y: float) -> List[MomentumKick]:
    """Plane-wave decomposition of ``u_pair`` into kicks ``(+-kappa_x, +-kappa_y)``.

    Kicks that coincide (a zero gradient) are merged.
    """
    merged: Dict[Tuple[float, float], np.ndarray] = {}
    for sx in (1, -1):
        for sy in (1, -1):
            key = (sx * kappa_x, sy * kappa_y)
            term = _KICK_X[sx] @ _KICK_Y[sy]
            merged[key] = merged[key] + term if key in merged else term
    return [MomentumKick(dkx, dky, matrix) for (dkx, dky), matrix in merged.items()]


def momentum_kicks(kappa_x: float, kappa_y: float, psi_in: np.ndarray) -> List[MomentumKick]:
    """Transverse momentum kicks and spin amplitudes imparted on ``psi_in``."""
    psi = np.asarray(psi_in, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
        raise ValidationError("incident spinor must be normalized")
    return [
        MomentumKick(k.dkx, k.dky, k.amplitude @ psi)
        for k in momentum_components(kappa_x, kappa_y)
    ]


def kicks_to_operator(kicks: Sequence[MomentumKick], x: float, y: float) -> np.ndarray:
    """Sum the plane-wave components back at ``(x, y)``."""
    total = None
    for kick in kicks:
        term = cmath.exp(1j * (kick.dkx * x + kick.dky * y)) * kick.amplitude
        total = term if total is None else total + term
    return total


@dataclass(frozen=True, eq=False)
class LatticeExpansion:
    """First-order expansion of ``u_pair`` about ``(m pi/kappa, n pi/kappa)``.

    ``u_pair = global_phase * (zeroth + kappa*r * sum coeff * l * S)`` where
    ``l`` is ``exp(+-i azimuth)`` and ``S`` is one of :data:`SPIN_FACTORS`.
    ``ladder`` is keyed by ``("l+"|"l-", spin factor name)``.
    """

    family: str
    m: float
    n: float
    kappa: float
    zeroth: SpinOperator
    global_phase: complex
    ladder: Dict[Tuple[str, str], complex]

    @property
    def centre(self) -> Tuple[float, float]:
        return self.m * math.pi / self.kappa, self.n * math.pi / self.kappa

    def evaluate(self, r: float, azimuth: float) -> np.ndarray:
        orbital = {"l+": cmath.exp(1j * azimuth), "l-": cmath.exp(-1j * azimuth)}
        first = sum(
            coeff * orbital[l] * SPIN_FACTORS[s] for (l, s), coeff in self.ladder.items()
        )
        return self.global_phase * (self.zeroth.matrix + self.kappa * r * first)


def _lattice_kind(value: float) -> str:
    doubled = 2 * value
    if abs(doubled - round(doubled)) > 1e-12:
        raise InvalidLatticeIndex(f"lattice index {value} is neither integer nor half-odd")
    return "integer" if round(doubled) % 2 == 0 else "half-odd"


def oam_lattice_expansion(kappa: float, m: float, n: float) -> LatticeExpansion:
    """Classify the lattice point ``(m, n)`` and return its ladder expansion."""
    if not kappa > 0:
        raise ValidationError("lattice expansion needs a positive phase gradient")
    kind = (_lattice_kind(m), _lattice_kind(n))
    if kind == ("integer", "integer"):
        family = "integer"
        zeroth = IDENTITY
        ladder = {("l+", "sigma-"): 1.0, ("l-", "sigma+"): -1.0}
    elif kind == ("half-odd", "half-odd"):
        family = "half-odd"
        zeroth = SIGMA_Z
        ladder = {("l+", "sigma+"): 1.0, ("l-", "sigma-"): 1.0}
    elif kind == ("half-odd", "integer"):
        family = "mixed"
        zeroth = 1j * SIGMA_Y
        ladder = {("l+", "1"): 0.5, ("l-", "1"): 0.5, ("l+", "sigma_z"): 0.5, ("l-", "sigma_z"): -0.5}
    else:
        family = "mixed"
        zeroth = 1j * SIGMA_X
        ladder = {
            ("l+", "1"): 0.5j,
            ("l-", "1"): -0.5j,
            ("l+", "sigma_z"): -0.5j,
            ("l-", "sigma_z"): -0.5j,
        }
    at_point = u_pair(kappa, kappa, m * math.pi / kappa, n * math.pi / kappa).matrix
    phase = complex(np.trace(zeroth.conj().T @ at_point) / 2)
    return LatticeExpansion(
        family=family,
        m=m,
        n=n,
        kappa=kappa,
        zeroth=SpinOperator(zeroth),
        global_phase=phase,
        ladder=ladder,
    )


def azimuthal_current(
    samples: np.ndarray, radius: float, ell: int = 0, c: Constants = CODATA_2018
) -> np.ndarray:
    """Azimuthal probability current on a ring of radius ``radius``.

    ``samples`` holds ``f`` at equally spaced azimuths on the last axis;
    leading axes (spinor components) are summed over.  The wavefunction is
    ``f * exp(i ell phi)``.

    Raises:
        SingularAxis: If ``radius <= 0``.
    """
    if not radius > 0:
        raise SingularAxis("the azimuthal current is undefined on the axis")
    f = np.asarray(samples, dtype=complex)
    count = f.shape[-1]
    if count < 3:
        raise ValidationError("need at least three azimuthal samples")
    step = 2 * math.pi / count
    derivative = (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2 * step)
    density = np.imag(np.conj(f) * derivative) + ell * np.abs(f) ** 2
    if density.ndim > 1:
        density = density.reshape(-1, count).sum(axis=0)
    return c.hbar / (c.neutron_mass * radius) * density


def ring_spinors(
    kappa: KappaSpec,
    theta_in: float,
    phi_in: float,
    centre: Tuple[float, float],
    radius: float,
    count: int = 256,
) -> np.ndarray:
    """``psi_d`` sampled on a ring about ``centre``; shape ``(2, count)``."""
    azimuth = np.arange(count) * 2 * math.pi / count
    X = centre[0] + radius * np.cos(azimuth)
    Y = centre[1] + radius * np.sin(azimuth)
    return outgoing_spinors(kappa, theta_in, phi_in, X, Y)
