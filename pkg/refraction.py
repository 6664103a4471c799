"""Magnetic Snell's law for a neutron crossing a sharp field boundary.

A spin eigenstate sees the Zeeman potential ``V = -mu_s * B``.  Crossing a
boundary keeps the tangential velocity and the total energy, so the speed
and the direction change together.  Deflections are signed: positive means
the ray turns away from the boundary normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from core import (
    CODATA_2018,
    ClassicallyForbidden,
    Constants,
    GrazingIncidence,
    Spin,
    TotalInternalReflection,
    ValidationError,
)

GRAZING_LIMIT = math.pi / 2 - 1e-6


def speed_after(v_in: float, moment: float, B: float, c: Constants = CODATA_2018) -> float:
    """Speed after the Zeeman potential changes by ``-moment * B``.

    Args:
        v_in: Speed before the change (m/s).
        moment: Signed moment of the spin state (J/T).
        B: Signed field step along the field axis (T).
        c: Physical constants.

    Returns:
        float: ``sqrt(v_in**2 + 2*moment*B/m)``.
    """
    radicand = v_in**2 + 2 * moment * B / c.neutron_mass
    if radicand <= 0:
        raise ClassicallyForbidden(
            f"kinetic energy would become non-positive (v_in={v_in} m/s, B={B} T)"
        )
    return math.sqrt(radicand)


def exact_deflection(
    theta_i: float, v_i: float, moment: float, delta_B: float, c: Constants = CODATA_2018
) -> Tuple[float, float]:
    """Signed deflection ``theta_o - theta_i`` and outgoing speed.

    The difference is built from the energy step itself, so deflections many
    orders of magnitude below the incidence angle keep full precision.
    """
    if abs(theta_i) > GRAZING_LIMIT:
        raise GrazingIncidence(f"incidence angle {theta_i} rad is too close to grazing")
    step = 2 * moment * delta_B / c.neutron_mass
    v_o_sq = v_i**2 + step
    if v_o_sq <= 0:
        raise ClassicallyForbidden(
            f"kinetic energy would become non-positive (v_in={v_i} m/s, dB={delta_B} T)"
        )
    ratio_sq = v_i**2 / v_o_sq
    sin_i = math.sin(theta_i)
    sin_o_sq = ratio_sq * sin_i**2
    if sin_o_sq > 1.0:
        raise TotalInternalReflection(f"no transmitted ray at incidence {theta_i} rad")
    cos_o = math.sqrt(1.0 - sin_o_sq)
    # s*cos(theta_i) - cos(theta_o) == (s**2 - 1) / (s*cos(theta_i) + cos(theta_o))
    sin_dev = sin_i * (-step / v_o_sq) / (math.sqrt(ratio_sq) * math.cos(theta_i) + cos_o)
    return math.asin(sin_dev), math.sqrt(v_o_sq)


def refract_exact(
    theta_i: float, v_i: float, moment: float, delta_B: float, c: Constants = CODATA_2018
) -> Tuple[float, float]:
    """Refract a ray through a field discontinuity.

    Args:
        theta_i: Signed incidence angle from the boundary normal (rad).
        v_i: Incoming speed (m/s).
        moment: Signed moment of the spin state (J/T).
        delta_B: Field discontinuity ``B_out - B_in`` along the field axis (T).
        c: Physical constants.

    Returns:
        Tuple[float, float]: Outgoing angle and speed.
    """
    alpha, v_o = exact_deflection(theta_i, v_i, moment, delta_B, c)
    return theta_i + alpha, v_o


def deflection_first_order(
    theta_i: float, v_i: float, moment: float, delta_B: float, c: Constants = CODATA_2018
) -> float:
    return -moment * delta_B / (c.neutron_mass * v_i**2) * math.tan(theta_i)


def refract_relativistic(
    theta_i: float,
    E_total: float,
    V_in: float,
    V_out: float,
    mass: float,
    c_in: float,
    c_out: float,
    rest_subtracted: bool = False,
) -> float:
    """Snell's law from the relativistic dispersion on each side.

    ``p = sqrt((E - V)**2 - m**2 c**4) / c`` on either side of the boundary and
    ``sin(theta_o) / sin(theta_i) = p_in / p_out``.  With ``mass = 0`` this is
    the optical law ``c_out sin(theta_i) = c_in sin(theta_o)``.

    When ``rest_subtracted`` is true ``E_total`` is the energy above the rest
    energy, which avoids cancelling ``m c**2`` against itself for slow
    neutrons.
    """
    p_in = _relativistic_momentum(E_total, V_in, mass, c_in, rest_subtracted)
    p_out = _relativistic_momentum(E_total, V_out, mass, c_out, rest_subtracted)
    sin_o = math.sin(theta_i) * p_in / p_out
    if abs(sin_o) > 1.0:
        raise TotalInternalReflection(f"no transmitted ray at incidence {theta_i} rad")
    return math.asin(sin_o)


def _relativistic_momentum(
    energy: float, potential: float, mass: float, light: float, rest_subtracted: bool
) -> float:
    rest = mass * light**2
    if rest_subtracted:
        kinetic = energy - potential
        p_sq_c_sq = kinetic * (kinetic + 2 * rest)
    else:
        p_sq_c_sq = (energy - potential) ** 2 - rest**2
    if p_sq_c_sq <= 0 or (rest_subtracted and energy - potential <= 0):
        raise ClassicallyForbidden("energy below the local rest energy plus potential")
    return math.sqrt(p_sq_c_sq) / light


@dataclass(frozen=True)
class Interface:
    """A planar field boundary seen in the plane of refraction.

    ``normal`` is the unit normal ``(n_u, n_z)`` oriented along the direction
    of travel; ``B_in`` and ``B_out`` are the signed fields on either side.
    """

    normal: Tuple[float, float]
    B_in: float
    B_out: float

    def __post_init__(self) -> None:
        if abs(math.hypot(*self.normal) - 1.0) > 1e-12:
            raise ValidationError("interface normal must have unit length")

    @property
    def delta_B(self) -> float:
        return self.B_out - self.B_in

    @property
    def normal_angle(self) -> float:
        """Angle of the normal from ``z`` towards ``+u``."""
        return math.atan2(self.normal[0], self.normal[1])

    def refract_ray(
        self, angle: float, speed: float, spin: Spin, c: Constants = CODATA_2018
    ) -> Tuple[float, float]:
        """Propagate a ray with direction ``angle`` (from ``z``) across the boundary.

        Returns:
            Tuple[float, float]: New direction angle and speed.
        """
        alpha, v_o = exact_deflection(
            angle - self.normal_angle, speed, spin.moment(c), self.delta_B, c
        )
        return angle + alpha, v_o


def interface_deflection(
    interface: Interface, theta_i: float, v_i: float, spin: Spin, c: Constants = CODATA_2018
) -> float:
    alpha, _ = exact_deflection(theta_i, v_i, spin.moment(c), interface.delta_B, c)
    return alpha
