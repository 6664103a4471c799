"""Ray geometry through magnetic Wollaston prism pairs.

Two kinds of results live here.  The closed forms give focusing points,
hypotenuse crossings and flight times to first order in the deflection
angles and the divergence.  The exact tracer follows each spin eigenstate as
a piecewise straight ray, refracting it at every face it crosses, and is the
reference the closed forms are checked against.

Frame of a pair: origin at the centre of the first prism, ``z`` along the
beam and ``u`` along ``z_hat x field_axis``.  Prism 1 spans
``|u|, |z| <= a/2`` with its hypotenuse on ``z = u``.  Prism 2 is shifted by
``D = a + gap``; its hypotenuse is ``z = u + D`` (parallelogram) or
``z = D - u`` (triangular).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from core import (
    SPINS,
    BeamlineConfig,
    Constants,
    DegenerateFocusing,
    MissedAperture,
    NeutronState,
    PrismPairSpec,
    Spin,
    ValidationError,
    deflection_magnitude,
)
from refraction import Interface, exact_deflection, refract_exact, speed_after

# (first region sign, second region sign) for prism 1 and prism 2.
REGION_SIGNS = {
    "parallelogram": ((-1, 1), (1, -1)),
    "triangular": ((-1, 1), (-1, 1)),
}

_ROOT_HALF = 1.0 / math.sqrt(2.0)
_FACE_NORMAL = (0.0, 1.0)


def field_layout(geometry: str) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Signs of the two field regions in each prism of a pair."""
    try:
        return REGION_SIGNS[geometry]
    except KeyError:
        raise ValidationError(f"unknown geometry {geometry!r}") from None


def _require_distinct_fields(spec: PrismPairSpec) -> None:
    if spec.B1 == spec.B2:
        raise DegenerateFocusing("B1 == B2: the two spin rays never cross")


def _alphas(spec: PrismPairSpec, speed: float, c: Constants) -> Tuple[float, float]:
    return deflection_magnitude(spec.B1, speed, c), deflection_magnitude(spec.B2, speed, c)


@dataclass(frozen=True)
class DeflectionChain:
    """Exact deflections of one spin state through a pair.

    ``entry`` is the ray angle after the entry face, ``first`` and ``second``
    the signed deflections at the two hypotenuses.  For the triangular layout
    the second deflection turns the ray by ``-second``.
    """

    spin: Spin
    geometry: str
    entry: float
    first: float
    second: float

    @property
    def ray_angles(self) -> Tuple[float, float, float]:
        after_first = self.entry + self.first
        turn = self.second if self.geometry == "parallelogram" else -self.second
        return self.entry, after_first, after_first + turn


def deflection_chain(
    spec: PrismPairSpec, state: NeutronState, c: Constants
) -> Dict[Spin, DeflectionChain]:
    """Entry refraction and both hypotenuse deflections for each spin.

    The faces between the two prisms are skipped; their effect is of second
    order in the deflection angles.
    """
    (s1a, s1b), (s2a, s2b) = field_layout(spec.geometry)
    phi = state.divergence
    chains: Dict[Spin, DeflectionChain] = {}
    for spin in SPINS:
        moment = spin.moment(c)
        entry, v1 = refract_exact(phi, state.speed, moment, s1a * spec.B1, c)
        first, _ = exact_deflection(
            math.pi / 4 + entry, v1, moment, (s1b - s1a) * spec.B1, c
        )
        v2 = speed_after(state.speed, moment, s2a * spec.B2, c)
        beta = entry + first
        if spec.geometry == "parallelogram":
            incidence = math.pi / 4 + beta
        else:
            incidence = math.pi / 4 - beta
        second, _ = exact_deflection(incidence, v2, moment, (s2b - s2a) * spec.B2, c)
        chains[spin] = DeflectionChain(spin, spec.geometry, entry, first, second)
    return chains


def focus_parallelogram(
    spec: PrismPairSpec, state: NeutronState, c: Constants
) -> Tuple[float, float, float]:
    """First-order focusing point ``(y_f, z_f, x_f)`` of a parallelogram pair."""
    _require_distinct_fields(spec)
    a1, a2 = _alphas(spec, state.speed, c)
    y0, phi = state.y0, state.divergence
    shift = spec.separation * a2 / (a1 - a2)
    y_f = y0 + phi * (y0 + spec.a / 2 - shift)
    z_f = y0 - shift + phi * (spec.a / 2 + 2 * y0 - shift)
    return y_f, z_f, state.x0


def focus_triangular(
    spec: PrismPairSpec, state: NeutronState, c: Constants
) -> Tuple[float, float]:
    """First-order focusing point ``(y_f, z_f)`` of a triangular pair."""
    _require_distinct_fields(spec)
    a1, a2 = _alphas(spec, state.speed, c)
    y0, phi = state.y0, state.divergence
    a, gap = spec.a, spec.gap
    d = a1 - a2
    slope = (a1 + a2) / d
    y_f = y0 + phi * (a * (a1 - 3 * a2) / (2 * d) - gap * a2 / d + y0 * slope)
    z_f = (
        y0 * slope
        - spec.separation * a2 / d
        + phi
        * (
            a * (a1**2 + 6 * a1 * a2 - 3 * a2**2) / (2 * d**2)
            + gap * a2 * (3 * a1 - a2) / d**2
            + 2 * y0 * (a1**2 - 4 * a1 * a2 + a2**2) / d**2
        )
    )
    return y_f, z_f


def focus(spec: PrismPairSpec, state: NeutronState, c: Constants) -> Tuple[float, float]:
    if spec.geometry == "parallelogram":
        y_f, z_f, _ = focus_parallelogram(spec, state, c)
        return y_f, z_f
    return focus_triangular(spec, state, c)


def focusing_locus_slope(spec: PrismPairSpec) -> float:
    """``dz_f/dy0`` of the focal points at zero divergence."""
    _require_distinct_fields(spec)
    if spec.geometry == "parallelogram":
        return 1.0
    return (spec.B1 + spec.B2) / (spec.B1 - spec.B2)


def entry_from_focus(spec: PrismPairSpec, geometry: str, y_f: float, divergence: float) -> float:
    """Entry coordinate ``y0`` of the ray focused at ``y_f``, to first order in divergence.

    Only field ratios enter, so no speed or constants are needed.
    """
    _require_distinct_fields(spec)
    field_layout(geometry)
    B1, B2 = spec.B1, spec.B2
    ratio = B2 / (B1 - B2)
    if geometry == "parallelogram":
        return y_f - divergence * (y_f + spec.a / 2 - spec.separation * ratio)
    return y_f - divergence * (
        spec.a * (B1 - 3 * B2) / (2 * (B1 - B2))
        - spec.gap * ratio
        + y_f * (B1 + B2) / (B1 - B2)
    )


def arrival_times(
    spec: PrismPairSpec, geometry: str, state: NeutronState, c: Constants
) -> Tuple[float, float]:
    """Flight times ``(t_up, t_down)`` from the entry face to the focal point.

    Signed deflections are ``+alpha_i`` for the up state and ``-alpha_i``
    for the down state, so that ``v0*(t_up - t_down) = 2*y_f*(alpha2 - alpha1)``.
    """
    _require_distinct_fields(spec)
    field_layout(geometry)
    a1, a2 = _alphas(spec, state.speed, c)
    v0, y0, phi = state.speed, state.y0, state.divergence
    a, gap = spec.a, spec.gap
    times: List[float] = []
    for spin in SPINS:
        b1, b2 = spin.sign * a1, spin.sign * a2
        d = b1 - b2
        if geometry == "parallelogram":
            t = (a * (phi + 1) * (b1 - 3 * b2) - 2 * b2 * (phi + 1) * gap) / (
                2 * v0 * d
            ) - y0 * (d - 2 * phi - 1) / v0
        else:
            t = (
                a * (b1 - 3 * b2) / (2 * v0 * d)
                + b2 * gap / (v0 * (b2 - b1))
                + y0 * (b1 + b2 - d**2) / (v0 * d)
                + phi
                * (
                    a * (4 * b1**2 / d**2 - 3) / (2 * v0)
                    + b2 * gap * (3 * b1 - b2) / (v0 * d**2)
                    + 2 * y0 * (b1**2 - 4 * b1 * b2 + b2**2) / (v0 * d**2)
                )
            )
        times.append(t)
    return times[0], times[1]


def hypotenuse_crossings(
    spec: PrismPairSpec, state: NeutronState, spin: Spin, c: Constants
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Closed-form ``(y, z)`` of the first and second hypotenuse crossings at zero divergence."""
    a1, _ = _alphas(spec, state.speed, c)
    t = math.tan(spin.sign * a1)
    y0, D = state.y0, spec.separation
    if spec.geometry == "parallelogram":
        y2 = (y0 + (D - y0) * t) / (1 - t)
        z2 = (y0 * (1 - t) + D) / (1 - t)
    else:
        z2 = (D - y0 * (1 - t)) / (1 + t)
        y2 = D - z2
    return (y0, y0), (y2, z2)


@dataclass(frozen=True)
class RaySegment:
    """Straight piece of an exact trace between two boundaries.

    ``angle`` is the direction in the refraction plane of the active pair;
    ``time_excess`` is the duration minus the time a ray at ``v0`` needs to
    cover the same ``z`` interval.
    """

    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    angle: float
    speed: float
    spin: Spin
    region: str
    field: float
    duration: float
    time_excess: float

    def __post_init__(self) -> None:
        if not self.speed > 0:
            raise ValidationError("segment speed must be positive")

    @property
    def length(self) -> float:
        return self.speed * self.duration


@dataclass(frozen=True)
class SpinPath:
    """Exact trace of one spin state from the first entry face to the detector."""

    spin: Spin
    segments: Tuple[RaySegment, ...]
    crossings: Tuple[Tuple[float, float], ...]
    larmor_phase: float
    kinetic_phase: float
    time_excess: float
    exit_point: Tuple[float, float]
    exit_angle: float
    exit_time_excess: float
    free_speed_sq_deficit: float

    @property
    def arrival_time(self) -> float:
        return sum(segment.duration for segment in self.segments)

    @property
    def end(self) -> Tuple[float, float, float]:
        return self.segments[-1].end

    @property
    def magnetic_phase(self) -> float:
        """``(1/hbar) * integral of mu*B dt``, the Larmor phase with opposite sign."""
        return -self.larmor_phase


@dataclass(frozen=True)
class TraceResult:
    """Exact traces keyed by spin, plus the focus when both spins were traced."""

    paths: Dict[Spin, SpinPath]
    focus: Optional[Tuple[float, float]] = None

    @property
    def arrival_times(self) -> Dict[Spin, float]:
        return {spin: path.arrival_time for spin, path in self.paths.items()}


class _Tracer:
    """Mutable ray state used while one spin is walked through a beamline."""

    def __init__(self, state: NeutronState, spin: Spin, c: Constants) -> None:
        self.v0 = state.speed
        self.spin = spin
        self.c = c
        self.moment = spin.moment(c)
        self.position = np.array([state.x0, state.y0, 0.0])
        self.axis = np.array([1.0, 0.0, 0.0])
        self.perp = np.array([0.0, 1.0, 0.0])
        self.angle = state.divergence
        self.v_n = 0.0
        self.field = 0.0
        self.region = "free"
        self.segments: List[RaySegment] = []
        self.crossings: List[Tuple[float, float]] = []
        self.magnetic = 0.0
        self.kinetic = 0.0
        self.time_excess = 0.0

    # Energy conservation fixes the in-plane speed: v_p**2 = v0**2 + excess.
    @property
    def excess(self) -> float:
        return 2 * self.moment * self.field / self.c.neutron_mass - self.v_n**2

    @property
    def in_plane_speed(self) -> float:
        return math.sqrt(self.v0**2 + self.excess)

    @property
    def u(self) -> float:
        return float(self.position @ self.perp)

    def velocity(self) -> np.ndarray:
        v_p = self.in_plane_speed
        return (
            self.v_n * self.axis
            + v_p * math.sin(self.angle) * self.perp
            + v_p * math.cos(self.angle) * np.array([0.0, 0.0, 1.0])
        )

    def enter_frame(self, pair: PrismPairSpec) -> None:
        velocity = self.velocity()
        self.axis = np.array(pair.field_axis)
        self.perp = np.array(pair.transverse_axis)
        self.v_n = float(velocity @ self.axis)
        self.angle = math.atan2(float(velocity @ self.perp), float(velocity[2]))

    def advance(self, normal: Tuple[float, float], offset: float, origin: float,
                face_z: Optional[float] = None) -> None:
        """Move in a straight line to ``n_u*u + n_z*(z - origin) = offset``."""
        n_u, n_z = normal
        sin_b, cos_b = math.sin(self.angle), math.cos(self.angle)
        z = float(self.position[2])
        if face_z is not None:
            dz = face_z - z
            path = dz / cos_b
        else:
            path = (offset - n_u * self.u - n_z * (z - origin)) / (n_u * sin_b + n_z * cos_b)
            dz = path * cos_b
        if path < 0:
            raise MissedAperture(f"{self.spin.label} ray cannot reach the next boundary")
        if path == 0:
            return
        v_p = self.in_plane_speed
        duration = path / v_p
        start = tuple(float(v) for v in self.position)
        step = path * sin_b * self.perp + self.v_n * duration * self.axis
        self.position = self.position + step
        self.position[2] = face_z if face_z is not None else z + dz
        v_z = v_p * cos_b
        deficit = -self.excess + v_p**2 * sin_b**2
        excess_time = dz * deficit / ((self.v0 + v_z) * v_z * self.v0)
        speed = math.sqrt(v_p**2 + self.v_n**2)
        self.segments.append(
            RaySegment(
                start=start,
                end=tuple(float(v) for v in self.position),
                angle=self.angle,
                speed=speed,
                spin=self.spin,
                region=self.region,
                field=self.field,
                duration=duration,
                time_excess=excess_time,
            )
        )
        self.magnetic += self.moment * self.field * duration / self.c.hbar
        self.kinetic += self.c.neutron_mass * speed**2 * duration / (2 * self.c.hbar)
        self.time_excess += excess_time

    def refract(self, normal: Tuple[float, float], field: float, region: str) -> None:
        interface = Interface(normal=normal, B_in=self.field, B_out=field)
        self.angle, _ = interface.refract_ray(self.angle, self.in_plane_speed, self.spin, self.c)
        self.field = field
        self.region = region

    def check_aperture(self, pair: PrismPairSpec, where: str) -> None:
        if not abs(self.u) < pair.a / 2:
            raise MissedAperture(
                f"{self.spin.label} ray misses the aperture at {where} (u={self.u:.6g} m)"
            )

    def traverse(self, pair: PrismPairSpec, origin: float, label: str) -> None:
        (s1a, s1b), (s2a, s2b) = field_layout(pair.geometry)
        half, D = pair.a / 2, pair.separation
        if pair.geometry == "parallelogram":
            second = (-_ROOT_HALF, _ROOT_HALF)
        else:
            second = (_ROOT_HALF, _ROOT_HALF)
        first = (-_ROOT_HALF, _ROOT_HALF)

        self.advance(_FACE_NORMAL, 0.0, origin, face_z=origin - half)
        self.check_aperture(pair, f"{label} prism 1 entry")
        self.refract(_FACE_NORMAL, s1a * pair.B1, f"{label}.prism1.first")

        self.advance(first, 0.0, origin)
        self.check_aperture(pair, f"{label} prism 1 hypotenuse")
        self.crossings.append((self.u, float(self.position[2])))
        self.refract(first, s1b * pair.B1, f"{label}.prism1.second")

        self.advance(_FACE_NORMAL, 0.0, origin, face_z=origin + half)
        self.check_aperture(pair, f"{label} prism 1 exit")
        self.refract(_FACE_NORMAL, 0.0, f"{label}.gap")

        self.advance(_FACE_NORMAL, 0.0, origin, face_z=origin + D - half)
        self.check_aperture(pair, f"{label} prism 2 entry")
        self.refract(_FACE_NORMAL, s2a * pair.B2, f"{label}.prism2.first")

        self.advance(second, D * _ROOT_HALF, origin)
        self.check_aperture(pair, f"{label} prism 2 hypotenuse")
        self.crossings.append((self.u, float(self.position[2])))
        self.refract(second, s2b * pair.B2, f"{label}.prism2.second")

        self.advance(_FACE_NORMAL, 0.0, origin, face_z=origin + D + half)
        self.check_aperture(pair, f"{label} prism 2 exit")
        self.refract(_FACE_NORMAL, 0.0, "free")


def _focusing_plane(
    pair: PrismPairSpec, state: NeutronState, c: Constants
) -> Tuple[Tuple[float, float], float]:
    """Normal and offset of the zero-divergence focal plane in the pair frame."""
    slope = focusing_locus_slope(pair)
    z0 = focus(pair, state.with_entry(y0=0.0, divergence=0.0), c)[1]
    norm = math.hypot(slope, 1.0)
    return (-slope / norm, 1.0 / norm), z0 / norm


def trace_exact(
    config: BeamlineConfig,
    state: NeutronState,
    spin: Optional[Spin] = None,
    c: Optional[Constants] = None,
) -> TraceResult:
    """Trace spin eigenstates exactly through every face of the beamline.

    The ray starts at ``(x0, y0)`` on the entry face of the first prism with
    divergence ``state.divergence`` in the ``yz`` plane.  The velocity
    component along a pair's field axis is tangential to all faces of that
    pair, so each pair is an exact in-plane refraction problem.

    Args:
        config: Beamline to trace through.
        state: Incident neutron.
        spin: Spin to trace; ``None`` traces both and intersects them.
        c: Constants, defaulting to ``config.constants``.

    Returns:
        TraceResult: Paths per spin and, for a single pair, the focus.

    Raises:
        MissedAperture: If a ray leaves a prism sideways or hits a corner.
    """
    c = config.constants if c is None else c
    spins = SPINS if spin is None else (spin,)
    paths = {s: _trace_spin(config, state, s, c) for s in spins}
    focus_point = None
    if spin is None and len(config.pairs) == 1:
        focus_point = _intersect(paths[Spin.UP], paths[Spin.DOWN])
    return TraceResult(paths=paths, focus=focus_point)


def _trace_spin(config: BeamlineConfig, state: NeutronState, spin: Spin, c: Constants) -> SpinPath:
    tracer = _Tracer(state, spin, c)
    tracer.position[2] = config.pair_origin(0) - config.pairs[0].a / 2
    for index, pair in enumerate(config.pairs):
        tracer.enter_frame(pair)
        tracer.traverse(pair, config.pair_origin(index), f"pair{index + 1}")
    exit_point = (tracer.u, float(tracer.position[2]))
    exit_angle = tracer.angle
    exit_time_excess = tracer.time_excess
    deficit = tracer.v_n**2
    if config.detector_orientation == "vertical":
        tracer.advance(_FACE_NORMAL, 0.0, 0.0, face_z=config.detector_z)
    else:
        pair = config.pairs[0]
        normal, offset = _focusing_plane(pair, state, c)
        tracer.advance(normal, offset, config.pair_origin(0))
    return SpinPath(
        spin=spin,
        segments=tuple(tracer.segments),
        crossings=tuple(tracer.crossings),
        larmor_phase=-tracer.magnetic,
        kinetic_phase=tracer.kinetic,
        time_excess=tracer.time_excess,
        exit_point=exit_point,
        exit_angle=exit_angle,
        exit_time_excess=exit_time_excess,
        free_speed_sq_deficit=deficit,
    )


def _intersect(up: SpinPath, down: SpinPath) -> Optional[Tuple[float, float]]:
    t_up, t_down = math.tan(up.exit_angle), math.tan(down.exit_angle)
    if t_up == t_down:
        return None
    (u_up, z_exit), (u_down, _) = up.exit_point, down.exit_point
    dz = (u_down - u_up) / (t_up - t_down)
    return u_up + t_up * dz, z_exit + dz


@dataclass(frozen=True)
class ExactFocus:
    """Oracle focus of one pair and the flight time of each spin to it."""

    y_f: float
    z_f: float
    arrival_times: Dict[Spin, float]


def exact_focus(spec: PrismPairSpec, state: NeutronState, c: Constants) -> ExactFocus:
    """Intersect the two exact spin rays behind a single pair.

    Coordinates are in the pair frame.  Times run from the entry face and
    keep the spin difference free of cancellation against the common flight
    time.
    """
    _require_distinct_fields(spec)
    single = replace(spec, L1=None)
    config = BeamlineConfig(
        pairs=(single,), detector_z=single.separation + single.a, constants=c
    )
    result = trace_exact(config, state, None, c)
    if result.focus is None:
        raise DegenerateFocusing("exit rays are parallel")
    y_f, z_f = result.focus
    v0 = state.speed
    z_entry = -single.a / 2
    times: Dict[Spin, float] = {}
    for spin, path in result.paths.items():
        _, z_exit = path.exit_point
        v_p = math.sqrt(v0**2 - path.free_speed_sq_deficit)
        v_z = v_p * math.cos(path.exit_angle)
        deficit = path.free_speed_sq_deficit + v_p**2 * math.sin(path.exit_angle) ** 2
        tail = (z_f - z_exit) * deficit / ((v0 + v_z) * v_z * v0)
        times[spin] = (z_f - z_entry) / v0 + path.exit_time_excess + tail
    return ExactFocus(y_f=y_f, z_f=z_f, arrival_times=times)
