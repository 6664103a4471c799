"""Sectioned configuration files with explicit units.

A file looks like::

    [neutron]
    wavelength = 1 nm
    divergence = 0 mrad

    [pair.1]
    a = 4 cm
    B1 = 103.85 mT
    B2 = 150 mT
    L1 = 1.3 m

Every physical value carries one of the unit suffixes in ``UNITS``; counts,
flags and names do not.  Lines starting with ``#`` or ``;`` are comments.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from core import (
    CODATA_2018,
    BeamlineConfig,
    Constants,
    NeutronState,
    ParseError,
    PrismPairSpec,
    Spin,
    ValidationError,
)

UNITS = {
    "length": {
        "m": 1.0,
        "cm": 1e-2,
        "mm": 1e-3,
        "um": 1e-6,
        "nm": 1e-9,
        "Å": 1e-10,
        "pm": 1e-12,
    },
    "field": {"T": 1.0, "mT": 1e-3},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": math.pi / 180},
    "speed": {"m/s": 1.0},
}

AXES = {
    "x": (1.0, 0.0, 0.0),
    "-x": (-1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "-y": (0.0, -1.0, 0.0),
}

PAIR_KEYS = {
    "a": "length",
    "gap": "length",
    "B1": "field",
    "B2": "field",
    "L1": "length",
    "field_axis": "text",
    "geometry": "text",
}

SECTION_KEYS = {
    "constants": {"gamma": "text"},
    "neutron": {
        "wavelength": "length",
        "speed": "speed",
        "theta_in": "angle",
        "phi_in": "angle",
        "x0": "length",
        "y0": "length",
        "divergence": "angle",
    },
    "detector": {"z": "length", "orientation": "text"},
    "checkerboard": {
        "L1": "length",
        "L2": "length",
        "L3": "length",
        "L4": "length",
        "cap": "field",
        "B1": "field",
    },
    "divergence": {"half_width": "angle", "count": "int"},
    "run": {"grid": "int", "cells": "int", "seed": "int", "subtract_carrier": "bool"},
    "refract": {
        "theta_min": "angle",
        "theta_max": "angle",
        "count": "int",
        "delta_B": "field",
        "spin": "text",
    },
    "phase": {"y_min": "length", "y_max": "length", "count": "int", "z": "length"},
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+(?:\.\d+)?)\s*\]\s*$")
_NUMBER = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*)$")
_BOOLEANS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


@dataclass(frozen=True)
class CheckerboardSpec:
    """Distances of the four prisms to the common focal plane and the field limit."""

    L1: float
    L2: float
    L3: float
    L4: float
    cap: Optional[float] = None
    B1: Optional[float] = None

    def __post_init__(self) -> None:
        if self.cap is None and self.B1 is None:
            raise ValidationError("[checkerboard] needs either cap or B1")

    @property
    def distances(self) -> Tuple[float, float, float, float]:
        return self.L1, self.L2, self.L3, self.L4


@dataclass(frozen=True)
class RefractSweep:
    theta_min: float = 0.0
    theta_max: float = math.radians(80.0)
    count: int = 81
    delta_B: float = 0.1
    spin: Spin = Spin.UP


@dataclass(frozen=True)
class PhaseSweep:
    y_min: float = -5e-3
    y_max: float = 5e-3
    count: int = 101
    z: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, parsed and validated."""

    beamline: BeamlineConfig
    state: NeutronState
    constants: Constants = CODATA_2018
    checkerboard: Optional[CheckerboardSpec] = None
    divergence_half_width: float = 0.0
    divergence_count: int = 1
    grid: int = 256
    cells: int = 1
    subtract_carrier: bool = False
    seed: int = 0
    refract: RefractSweep = RefractSweep()
    phase: PhaseSweep = PhaseSweep()
    config_hash: str = ""

    @property
    def first_pair(self) -> PrismPairSpec:
        return self.beamline.pairs[0]

    def detector_in_pair_frame(self, index: int = 0) -> float:
        """Detector ``z`` measured from the first prism centre of pair ``index``."""
        return self.beamline.detector_z - self.beamline.pair_origin(index)


@dataclass
class _Entry:
    value: object
    line: int
    column: int


def _convert(raw: str, kind: str, line: int, column: int) -> object:
    if kind == "text":
        return raw
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"expected an integer, got {raw!r}", line, column) from None
    if kind == "bool":
        try:
            return _BOOLEANS[raw.lower()]
        except KeyError:
            raise ParseError(f"expected true or false, got {raw!r}", line, column) from None
    match = _NUMBER.match(raw)
    if not match:
        raise ParseError(f"expected a number with a {kind} unit, got {raw!r}", line, column)
    number, unit = match.groups()
    if not unit:
        raise ParseError(f"missing {kind} unit", line, column + len(raw))
    unit_column = column + raw.index(unit, len(number))
    for dimension, table in UNITS.items():
        if unit in table:
            if dimension != kind:
                raise ParseError(
                    f"unit {unit!r} is a {dimension} unit, expected {kind}", line, unit_column
                )
            return float(number) * table[unit]
    raise ParseError(f"unknown unit {unit!r}", line, unit_column)


def _key_kinds(section: str) -> Dict[str, str]:
    if section.startswith("pair."):
        return PAIR_KEYS
    return SECTION_KEYS[section]


def _scan(text: str) -> Dict[str, Dict[str, _Entry]]:
    sections: Dict[str, Dict[str, _Entry]] = {}
    current: Optional[str] = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(line) - len(line.lstrip())
        header = _SECTION.match(stripped)
        if header:
            current = header.group(1)
            if not (current.startswith("pair.") or current in SECTION_KEYS):
                raise ParseError(f"unknown section [{current}]", number, indent + 1)
            if current in sections:
                raise ParseError(f"duplicate section [{current}]", number, indent + 1)
            sections[current] = {}
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", number, indent + 1)
        if current is None:
            raise ParseError("key outside of a section", number, indent + 1)
        key, _, raw = line.partition("=")
        key = key.strip()
        kinds = _key_kinds(current)
        if key not in kinds:
            raise ParseError(f"unknown key {key!r} in [{current}]", number, indent + 1)
        if key in sections[current]:
            raise ParseError(f"duplicate key {key!r}", number, indent + 1)
        value = raw.split("#", 1)[0].strip()
        column = line.index("=") + 2 + (len(raw) - len(raw.lstrip()))
        if not value:
            raise ParseError(f"missing value for {key!r}", number, column)
        sections[current][key] = _Entry(_convert(value, kinds[key], number, column), number, column)
    return sections


def _get(section: Dict[str, _Entry], key: str, default=None):
    entry = section.get(key)
    return default if entry is None else entry.value


def _constants(section: Dict[str, _Entry]) -> Constants:
    gamma = _get(section, "gamma", "codata")
    if gamma == "codata":
        return CODATA_2018
    if gamma == "rounded":
        return Constants.rounded()
    entry = section["gamma"]
    raise ParseError(f"gamma must be 'codata' or 'rounded', got {gamma!r}", entry.line, entry.column)


def _state(section: Dict[str, _Entry], c: Constants) -> NeutronState:
    kwargs = {
        key: _get(section, key)
        for key in ("theta_in", "phi_in", "x0", "y0", "divergence")
        if key in section
    }
    wavelength, speed = _get(section, "wavelength"), _get(section, "speed")
    if wavelength is not None and speed is not None:
        raise ValidationError("[neutron] takes wavelength or speed, not both")
    if wavelength is not None:
        return NeutronState.from_wavelength(wavelength, c, **kwargs)
    if speed is not None:
        return NeutronState.from_speed(speed, c, **kwargs)
    raise ValidationError("[neutron] needs a wavelength or a speed")


def _pair(name: str, section: Dict[str, _Entry]) -> PrismPairSpec:
    for key in ("a", "B1", "B2"):
        if key not in section:
            raise ValidationError(f"[{name}] is missing {key}")
    axis_name = _get(section, "field_axis", "x")
    if axis_name not in AXES:
        entry = section["field_axis"]
        raise ParseError(f"field_axis must be one of {sorted(AXES)}", entry.line, entry.column)
    return PrismPairSpec(
        a=_get(section, "a"),
        gap=_get(section, "gap", 0.0),
        B1=_get(section, "B1"),
        B2=_get(section, "B2"),
        field_axis=AXES[axis_name],
        geometry=_get(section, "geometry", "parallelogram"),
        L1=_get(section, "L1"),
    )


def _spin(section: Dict[str, _Entry]) -> Spin:
    label = _get(section, "spin", "up")
    for spin in Spin:
        if spin.label == label:
            return spin
    entry = section["spin"]
    raise ParseError(f"spin must be 'up' or 'down', got {label!r}", entry.line, entry.column)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration.

    Raises:
        ParseError: Malformed lines, unknown keys or missing/wrong units.
        ValidationError: Values that violate a record invariant.
    """
    sections = _scan(text)
    c = _constants(sections.get("constants", {}))
    state = _state(sections.get("neutron", {}), c)

    pair_names = sorted(
        (name for name in sections if name.startswith("pair.")), key=lambda n: int(n.split(".")[1])
    )
    if not pair_names:
        raise ValidationError("at least one [pair.N] section is required")
    expected = [f"pair.{i}" for i in range(1, len(pair_names) + 1)]
    if pair_names != expected:
        raise ValidationError(f"pair sections must be numbered 1..N, got {pair_names}")
    pairs: List[PrismPairSpec] = [_pair(name, sections[name]) for name in pair_names]

    detector = sections.get("detector", {})
    detector_z = _get(detector, "z")
    if detector_z is None:
        if pairs[0].L1 is None:
            raise ValidationError("set [detector] z or L1 of [pair.1]")
        detector_z = pairs[0].L1
    beamline = BeamlineConfig(
        pairs=tuple(pairs),
        detector_z=detector_z,
        detector_orientation=_get(detector, "orientation", "vertical"),
        constants=c,
    )

    checkerboard = None
    if "checkerboard" in sections:
        board = sections["checkerboard"]
        missing = [k for k in ("L1", "L2", "L3", "L4") if k not in board]
        if missing:
            raise ValidationError(f"[checkerboard] is missing {', '.join(missing)}")
        checkerboard = CheckerboardSpec(
            L1=_get(board, "L1"),
            L2=_get(board, "L2"),
            L3=_get(board, "L3"),
            L4=_get(board, "L4"),
            cap=_get(board, "cap"),
            B1=_get(board, "B1"),
        )

    spread = sections.get("divergence", {})
    run = sections.get("run", {})
    refract = sections.get("refract", {})
    phase = sections.get("phase", {})
    config = RunConfig(
        beamline=beamline,
        state=state,
        constants=c,
        checkerboard=checkerboard,
        divergence_half_width=_get(spread, "half_width", 0.0),
        divergence_count=_get(spread, "count", 1),
        grid=_get(run, "grid", 256),
        cells=_get(run, "cells", 1),
        subtract_carrier=_get(run, "subtract_carrier", False),
        seed=_get(run, "seed", 0),
        refract=RefractSweep(
            theta_min=_get(refract, "theta_min", RefractSweep.theta_min),
            theta_max=_get(refract, "theta_max", RefractSweep.theta_max),
            count=_get(refract, "count", RefractSweep.count),
            delta_B=_get(refract, "delta_B", RefractSweep.delta_B),
            spin=_spin(refract),
        ),
        phase=PhaseSweep(
            y_min=_get(phase, "y_min", PhaseSweep.y_min),
            y_max=_get(phase, "y_max", PhaseSweep.y_max),
            count=_get(phase, "count", PhaseSweep.count),
            z=_get(phase, "z"),
        ),
        config_hash=config_hash(text),
    )
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.grid < 2:
        raise ValidationError("[run] grid must be at least 2")
    if config.cells < 1:
        raise ValidationError("[run] cells must be at least 1")
    if config.seed < 0:
        raise ValidationError("[run] seed must be non-negative")
    if config.divergence_count < 1 or config.divergence_half_width < 0:
        raise ValidationError("[divergence] needs count >= 1 and half_width >= 0")
    if config.refract.count < 1 or config.phase.count < 1:
        raise ValidationError("sweep counts must be at least 1")
    if not config.refract.theta_min <= config.refract.theta_max:
        raise ValidationError("[refract] theta_min must not exceed theta_max")


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
