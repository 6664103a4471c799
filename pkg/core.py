"""Physical constants, records and errors shared by the prism simulator.

Every quantity is held in SI units.  The records are frozen dataclasses so a
configuration can be handed to several workers without copying.

The beam travels along ``+z``.  A prism pair is described in its own frame
whose origin is the centre of the first prism; the pair's position along the
beamline is fixed through its distance ``L1`` to the detector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import constants as sc

# CODATA 2018 neutron values, pinned so results do not move with SciPy.
NEUTRON_MASS = 1.67492749804e-27
NUCLEAR_MAGNETON = 5.0507837461e-27
G_HALF_CODATA = -1.91304273
G_HALF_ROUNDED = -1.913

GEOMETRIES = {"parallelogram", "triangular"}
DETECTOR_ORIENTATIONS = {"vertical", "focusing-plane"}


class SimulatorError(Exception):
    """Base class for every error raised by the simulator."""

    exit_code = 4


class ParseError(SimulatorError):
    """Malformed configuration text."""

    exit_code = 2

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(SimulatorError):
    """A record or configuration violates one of its invariants."""

    exit_code = 3


class PhysicsDomainError(SimulatorError):
    """Inputs outside the domain where the physics is defined."""

    exit_code = 4


class NonPositiveWavelength(PhysicsDomainError):
    pass


class EqualFields(PhysicsDomainError):
    pass


class ClassicallyForbidden(PhysicsDomainError):
    pass


class TotalInternalReflection(PhysicsDomainError):
    pass


class GrazingIncidence(PhysicsDomainError):
    pass


class DegenerateFocusing(PhysicsDomainError):
    pass


class MissedAperture(PhysicsDomainError):
    pass


class DegenerateDistances(PhysicsDomainError):
    pass


class InvalidLatticeIndex(PhysicsDomainError):
    pass


class EmptyDistribution(PhysicsDomainError):
    pass


class SingularAxis(PhysicsDomainError):
    pass


@dataclass(frozen=True)
class Constants:
    """Physical constants used throughout the simulator.

    ``g_half`` is half the g-factor of the free neutron, so the magnetic
    moment is ``g_half * nuclear_magneton`` and therefore negative.
    """

    neutron_mass: float = NEUTRON_MASS
    nuclear_magneton: float = NUCLEAR_MAGNETON
    g_half: float = G_HALF_CODATA
    hbar: float = sc.hbar
    planck: float = sc.h
    c: float = sc.c

    def __post_init__(self) -> None:
        if not (self.g_half < 0 and 1.91 <= abs(self.g_half) <= 1.92):
            raise ValidationError(
                f"g_half must be negative with magnitude in [1.91, 1.92], got {self.g_half}"
            )
        if abs(self.planck - 2 * math.pi * self.hbar) > 1e-12 * self.planck:
            raise ValidationError("planck must equal 2*pi*hbar")
        if self.neutron_mass <= 0 or self.nuclear_magneton <= 0 or self.c <= 0:
            raise ValidationError("mass, magneton and c must be positive")

    @property
    def neutron_moment(self) -> float:
        return self.g_half * self.nuclear_magneton

    @property
    def moment_magnitude(self) -> float:
        return abs(self.neutron_moment)

    @classmethod
    def rounded(cls) -> "Constants":
        """Constants with the rounded ``g_half = -1.913``."""
        return cls(g_half=G_HALF_ROUNDED)


CODATA_2018 = Constants()


class Spin(enum.Enum):
    """Spin eigenstate along the local field axis.

    The up state carries the moment ``-|mu|`` and the down state ``+|mu|``.
    """

    UP = 1
    DOWN = -1

    @property
    def sign(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        return "up" if self is Spin.UP else "down"

    def flipped(self) -> "Spin":
        return Spin.DOWN if self is Spin.UP else Spin.UP

    def moment(self, c: Constants = CODATA_2018) -> float:
        return -self.value * c.moment_magnitude


SPINS = (Spin.UP, Spin.DOWN)


def wavelength_to_speed(wavelength: float, c: Constants = CODATA_2018) -> float:
    """de Broglie speed ``h / (m * wavelength)``."""
    if not wavelength > 0:
        raise NonPositiveWavelength(f"wavelength must be positive, got {wavelength}")
    return c.planck / (c.neutron_mass * wavelength)


def speed_to_wavelength(speed: float, c: Constants = CODATA_2018) -> float:
    if not speed > 0:
        raise ValidationError(f"speed must be positive, got {speed}")
    return c.planck / (c.neutron_mass * speed)


@dataclass(frozen=True)
class NeutronState:
    """Incident neutron: wavelength/speed, Bloch angles and entry ray.

    Build it with :meth:`from_wavelength` or :meth:`from_speed` so that the
    two kinematic fields stay consistent.
    """

    wavelength: float
    speed: float
    theta_in: float = 0.0
    phi_in: float = 0.0
    x0: float = 0.0
    y0: float = 0.0
    divergence: float = 0.0

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise NonPositiveWavelength(f"wavelength must be positive, got {self.wavelength}")
        if not self.speed > 0:
            raise ValidationError(f"speed must be positive, got {self.speed}")
        if not 0.0 <= self.theta_in <= math.pi:
            raise ValidationError(f"theta_in must lie in [0, pi], got {self.theta_in}")

    @classmethod
    def from_wavelength(
        cls, wavelength: float, c: Constants = CODATA_2018, **kwargs
    ) -> "NeutronState":
        return cls(wavelength=wavelength, speed=wavelength_to_speed(wavelength, c), **kwargs)

    @classmethod
    def from_speed(cls, speed: float, c: Constants = CODATA_2018, **kwargs) -> "NeutronState":
        return cls(wavelength=speed_to_wavelength(speed, c), speed=speed, **kwargs)

    def wavenumber(self, c: Constants = CODATA_2018) -> float:
        return c.neutron_mass * self.speed / c.hbar

    def spinor(self) -> np.ndarray:
        """Incident spinor ``(cos(theta/2), exp(i phi) sin(theta/2))``."""
        return np.array(
            [
                math.cos(self.theta_in / 2),
                complex(math.cos(self.phi_in), math.sin(self.phi_in)) * math.sin(self.theta_in / 2),
            ],
            dtype=complex,
        )

    def with_entry(self, y0: Optional[float] = None, divergence: Optional[float] = None) -> "NeutronState":
        return replace(
            self,
            y0=self.y0 if y0 is None else y0,
            divergence=self.divergence if divergence is None else divergence,
        )


@dataclass(frozen=True)
class PrismPairSpec:
    """One pair of magnetic Wollaston prisms.

    Attributes:
        a: Edge length of each (square cross-section) prism.
        gap: Distance between the facing faces of the two prisms.
        B1: Field magnitude in the first prism.
        B2: Field magnitude in the second prism.
        field_axis: Transverse unit vector the fields are aligned with.
        geometry: ``"parallelogram"`` or ``"triangular"``.
        L1: Distance from the first prism centre to the detector, if known.
    """

    a: float
    gap: float
    B1: float
    B2: float
    field_axis: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    geometry: str = "parallelogram"
    L1: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValidationError(f"prism edge a must be positive, got {self.a}")
        if self.gap < 0:
            raise ValidationError(f"prism gap must be non-negative, got {self.gap}")
        if self.B1 < 0 or self.B2 < 0:
            raise ValidationError("field magnitudes B1, B2 must be non-negative")
        if self.geometry not in GEOMETRIES:
            raise ValidationError(f"unknown geometry {self.geometry!r}")
        axis = np.asarray(self.field_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValidationError("field_axis must be a unit 3-vector")
        if abs(axis[2]) > 1e-12:
            raise ValidationError("field_axis must be orthogonal to the beam axis z")
        object.__setattr__(self, "field_axis", tuple(float(v) for v in axis))

    @property
    def separation(self) -> float:
        """Distance between the two prism centres, ``a + gap``."""
        return self.a + self.gap

    @property
    def L2(self) -> Optional[float]:
        return None if self.L1 is None else self.L1 - self.separation

    @property
    def delta_B(self) -> float:
        return self.B1 - self.B2

    @property
    def transverse_axis(self) -> Tuple[float, float, float]:
        """In-plane transverse direction ``z_hat x field_axis``."""
        nx, ny, _ = self.field_axis
        return (-ny, nx, 0.0)

    def with_fields(self, B1: float, B2: float) -> "PrismPairSpec":
        return replace(self, B1=B1, B2=B2)

    def scaled(self, factor: float) -> "PrismPairSpec":
        return replace(self, B1=self.B1 * factor, B2=self.B2 * factor)


@dataclass(frozen=True)
class BeamlineConfig:
    """Ordered prism pairs followed by a detector plane.

    The beamline frame puts ``z = 0`` at the first prism centre of the first
    pair unless that pair fixes its position through ``L1``.
    """

    pairs: Tuple[PrismPairSpec, ...]
    detector_z: float
    detector_orientation: str = "vertical"
    constants: Constants = CODATA_2018

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ValidationError("a beamline needs at least one prism pair")
        if self.detector_orientation not in DETECTOR_ORIENTATIONS:
            raise ValidationError(f"unknown detector orientation {self.detector_orientation!r}")
        if self.detector_orientation == "focusing-plane" and len(self.pairs) != 1:
            raise ValidationError("a focusing-plane detector is defined for a single pair only")
        for i, first in enumerate(self.pairs):
            for second in self.pairs[i + 1:]:
                if abs(float(np.dot(first.field_axis, second.field_axis))) > 1e-12:
                    raise ValidationError("field axes of different pairs must be orthogonal")
        last_exit = -math.inf
        for index, pair in enumerate(self.pairs):
            origin = self.pair_origin(index)
            if origin - pair.a / 2 < last_exit:
                raise ValidationError(f"pair {index + 1} overlaps the preceding pair")
            last_exit = origin + pair.separation + pair.a / 2
        if self.detector_z < last_exit:
            raise ValidationError("the detector must lie downstream of the last prism")

    def pair_origin(self, index: int) -> float:
        """Beamline ``z`` of the first prism centre of pair ``index``."""
        pair = self.pairs[index]
        if pair.L1 is not None:
            return self.detector_z - pair.L1
        if index == 0:
            return 0.0
        raise ValidationError(f"pair {index + 1} needs L1 to be placed on the beamline")


def entanglement_length_sesans(
    wavelength: float, B: float, L1: float, L2: float, c: Constants = CODATA_2018
) -> float:
    """Spin-echo entanglement length for equal field magnitudes."""
    return c.neutron_mass * c.moment_magnitude * wavelength**2 * B * abs(L1 - L2) / (
        math.pi**2 * c.hbar**2
    )


def entanglement_length_semsans(
    wavelength: float, B1: float, B2: float, Ls: float, c: Constants = CODATA_2018
) -> float:
    return c.neutron_mass * c.moment_magnitude * wavelength**2 * abs(B1 - B2) * Ls / (
        math.pi**2 * c.hbar**2
    )


def fringe_period(wavelength: float, B1: float, B2: float, c: Constants = CODATA_2018) -> float:
    """Detector fringe period of a single pair.

    Raises:
        EqualFields: If ``B1 == B2``; the period diverges.
    """
    if not wavelength > 0:
        raise NonPositiveWavelength(f"wavelength must be positive, got {wavelength}")
    if B1 == B2:
        raise EqualFields("fringe period diverges for B1 == B2")
    return math.pi**2 * c.hbar**2 / (c.neutron_mass * c.moment_magnitude * wavelength * abs(B1 - B2))


def deflection_magnitude(B: float, speed: float, c: Constants = CODATA_2018) -> float:
    """First-order hypotenuse deflection ``2|mu|B/(m v^2)``."""
    return 2 * c.moment_magnitude * B / (c.neutron_mass * speed**2)


def focusing_residual(B1: float, L1: float, B2: float, L2: float) -> float:
    """``B1*L1 - B2*L2``; zero when the detector sits in the focusing plane."""
    return B1 * L1 - B2 * L2


def texture_length(speed: float, delta_B: float, c: Constants = CODATA_2018) -> float:
    """Canonical texture length ``r0 = v0*hbar/(2|mu||dB|)``."""
    if delta_B == 0:
        raise EqualFields("r0 diverges for a vanishing field difference")
    return speed * c.hbar / (2 * c.moment_magnitude * abs(delta_B))
