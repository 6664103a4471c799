import argparse
import logging
import sys
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config import RunConfig, load_config
from core import (
    SimulatorError,
    ValidationError,
    focusing_residual,
    texture_length,
)
from emission import Column, emit
from interferometry import (
    fringe_visibility,
    phase_first_order,
    phase_off_focus,
    phase_second_order,
    relative_phase_exact,
    uniform_divergence,
)
from raytrace import arrival_times, exact_focus, focus, trace_exact
from refraction import deflection_first_order, refract_exact
from textures import (
    fields_for_cap,
    kappa_from_fields,
    oam_density,
    solve_checkerboard_fields,
    spin_texture,
    texture_grid,
)
from validation import run_validation


logging.basicConfig(level=logging.INFO)

COMMANDS = (
    "refract",
    "trace",
    "focus",
    "phase",
    "fringe",
    "solve-fields",
    "texture",
    "oam",
    "validate",
)

IO_EXIT_CODE = 5
CHECK_FAILED_EXIT_CODE = 1


def _summary_line(command: str, summary: Dict) -> str:
    parts = []
    for key, value in summary.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.6f}" if key == "visibility" else f"{key}={value:.6g}")
        elif isinstance(value, (str, int)):
            parts.append(f"{key}={value}")
    return f"{command}: " + " ".join(parts)


def _field_pairs(config: RunConfig) -> List[float]:
    """``(B1, B2, B3, B4)`` taken from the x-field and y-field pairs; missing pairs count as zero."""
    fields = [0.0, 0.0, 0.0, 0.0]
    for pair in config.beamline.pairs:
        if abs(pair.field_axis[0]) == 1.0:
            fields[0:2] = [pair.B1, pair.B2]
        elif abs(pair.field_axis[1]) == 1.0:
            fields[2:4] = [pair.B1, pair.B2]
    return fields


def _kappa(config: RunConfig):
    return kappa_from_fields(
        _field_pairs(config),
        config.state,
        config.constants,
        geometry=config.first_pair.geometry,
        divergence=config.state.divergence,
    )


def run_refract(config: RunConfig, out_dir: str) -> Dict:
    sweep, c = config.refract, config.constants
    speed = config.state.speed
    moment = sweep.spin.moment(c)
    rows = []
    for theta in np.linspace(sweep.theta_min, sweep.theta_max, sweep.count):
        theta_out, speed_out = refract_exact(theta, speed, moment, sweep.delta_B, c)
        rows.append(
            (
                theta,
                theta_out,
                theta_out - theta,
                deflection_first_order(theta, speed, moment, sweep.delta_B, c),
                speed_out,
            )
        )
    columns = [
        Column("theta_in", "rad"),
        Column("theta_out", "rad"),
        Column("deflection", "rad"),
        Column("first_order", "rad"),
        Column("speed_out", "m/s"),
    ]
    emit(out_dir, "refract", "refract", columns, rows, config.config_hash,
         {"spin": sweep.spin.label, "delta_B": sweep.delta_B})
    return {"rows": len(rows), "max_deflection": max(abs(r[2]) for r in rows)}


def run_trace(config: RunConfig, out_dir: str) -> Dict:
    result = trace_exact(config.beamline, config.state)
    rows = []
    for spin, path in result.paths.items():
        for index, segment in enumerate(path.segments):
            rows.append(
                (spin.sign, index, *segment.start, *segment.end,
                 segment.angle, segment.speed, segment.field, segment.duration)
            )
    columns = [
        Column("spin"),
        Column("segment"),
        Column("x_start", "m"),
        Column("y_start", "m"),
        Column("z_start", "m"),
        Column("x_end", "m"),
        Column("y_end", "m"),
        Column("z_end", "m"),
        Column("angle", "rad"),
        Column("speed", "m/s"),
        Column("field", "T"),
        Column("duration", "s"),
    ]
    summary: Dict = {
        f"larmor_{spin.label}": path.larmor_phase for spin, path in result.paths.items()
    }
    summary.update(
        {f"arrival_{spin.label}": t for spin, t in result.arrival_times.items()}
    )
    if result.focus is not None:
        summary["y_f"], summary["z_f"] = result.focus
    emit(out_dir, "trace", "trace", columns, rows, config.config_hash, summary)
    return summary


def run_focus(config: RunConfig, out_dir: str) -> Dict:
    c, state = config.constants, config.state
    rows = []
    summary: Dict = {}
    for index, pair in enumerate(config.beamline.pairs):
        y_f, z_f = focus(pair, state, c)
        oracle = exact_focus(pair, state, c)
        t_up, t_down = arrival_times(pair, pair.geometry, state, c)
        L1 = config.detector_in_pair_frame(index)
        residual = focusing_residual(pair.B1, L1, pair.B2, L1 - pair.separation)
        rows.append((index + 1, y_f, z_f, oracle.y_f, oracle.z_f, t_up - t_down, residual))
        summary[f"pair{index + 1}_residual"] = residual
    columns = [
        Column("pair"),
        Column("y_f", "m"),
        Column("z_f", "m"),
        Column("y_f_exact", "m"),
        Column("z_f_exact", "m"),
        Column("dt", "s"),
        Column("B1L1_minus_B2L2", "T m"),
    ]
    emit(out_dir, "focus", "focus", columns, rows, config.config_hash, summary)
    summary["z_f"] = rows[0][2]
    return summary


def _phase_z(config: RunConfig) -> float:
    return config.phase.z if config.phase.z is not None else config.detector_in_pair_frame(0)


def run_phase(config: RunConfig, out_dir: str) -> Dict:
    c, state, pair = config.constants, config.state, config.first_pair
    sweep = config.phase
    z = _phase_z(config)
    phi = state.divergence
    with_exact = pair.transverse_axis == (0.0, 1.0, 0.0)
    if not with_exact:
        logging.info("Skipping exact phases: only pairs refracting along +y are traced")
    rows = []
    for y in tqdm(np.linspace(sweep.y_min, sweep.y_max, sweep.count), desc="Phase profile"):
        first = phase_first_order(pair, pair.geometry, y, z, phi, state, c)
        second = phase_second_order(pair, pair.geometry, y, z, phi, state, c)
        split = phase_off_focus(pair, pair.geometry, y, z, phi, state, c)
        row = [y, first, first + second, 2 * split.larmor, 2 * split.kinetic]
        if with_exact:
            row.append(relative_phase_exact(pair, state, y, z, c).relative)
        rows.append(row)
    columns = [
        Column("y", "m"),
        Column("first_order", "rad"),
        Column("through_second_order", "rad"),
        Column("larmor", "rad"),
        Column("kinetic", "rad"),
    ]
    if with_exact:
        columns.append(Column("exact", "rad"))
    summary = {"z": z, "divergence": phi}
    emit(out_dir, "phase", "phase", columns, rows, config.config_hash, summary)
    return summary


def run_fringe(config: RunConfig, out_dir: str) -> Dict:
    pair = config.first_pair
    z = config.detector_in_pair_frame(0)
    distribution = uniform_divergence(config.divergence_half_width, config.divergence_count)
    result = fringe_visibility(pair, pair.geometry, z, distribution, config.state, config.constants)
    summary = {
        "visibility": result.visibility,
        "profile_visibility": result.profile_visibility,
        "z": z,
    }
    emit(out_dir, "fringe", "fringe", [Column("y", "m"), Column("intensity")],
         zip(result.y, result.intensity), config.config_hash, summary)
    return summary


def _checkerboard_fields(config: RunConfig) -> Sequence[float]:
    board = config.checkerboard
    if board is None:
        raise ValidationError("solve-fields needs a [checkerboard] section")
    if board.cap is not None:
        return fields_for_cap(board.cap, *board.distances)
    B2, B3, B4 = solve_checkerboard_fields(board.B1, *board.distances)
    return board.B1, B2, B3, B4


def run_solve_fields(config: RunConfig, out_dir: str) -> Dict:
    fields = _checkerboard_fields(config)
    distances = config.checkerboard.distances
    kappa = kappa_from_fields(fields, config.state, config.constants)
    rows = [(i + 1, L, B) for i, (L, B) in enumerate(zip(distances, fields))]
    summary = {f"B{i + 1}": B for i, B in enumerate(fields)}
    summary["period"] = kappa.period_y
    summary["r0"] = texture_length(config.state.speed, fields[0] - fields[1], config.constants)
    emit(out_dir, "solve_fields", "solve-fields",
         [Column("prism"), Column("L", "m"), Column("B", "T")], rows, config.config_hash, summary)
    return summary


def _texture_axes(config: RunConfig):
    kappa = _kappa(config)
    x, y = texture_grid(kappa, config.grid, config.cells)
    return kappa, x, y


def run_texture(config: RunConfig, out_dir: str) -> Dict:
    kappa, x, y = _texture_axes(config)
    state = config.state
    texture = spin_texture(kappa, state.theta_in, state.phi_in, x, y)
    columns = [Column("x", "m"), Column("y", "m")] + [
        Column(name, "rad" if name.startswith("phase") else "1") for name in texture.components
    ]
    norm = texture.bloch_norm()
    summary = {
        "kappa_x": kappa.kappa_x,
        "kappa_y": kappa.kappa_y,
        "max_norm_error": float(np.max(np.abs(norm - 1))),
    }
    emit(out_dir, "texture", "texture", columns, texture.rows(), config.config_hash, summary, kind="map")
    return summary


def run_oam(config: RunConfig, out_dir: str) -> Dict:
    kappa, x, y = _texture_axes(config)
    state, c = config.state, config.constants
    density = oam_density(
        kappa,
        state.wavenumber(c),
        state.theta_in,
        state.phi_in,
        x,
        y,
        subtract_carrier=config.subtract_carrier,
    )
    density.components = {name: density.components[name] for name in ("L_z", "L_x", "L_y")}
    columns = [Column("x", "m"), Column("y", "m")] + [
        Column(name, "hbar") for name in density.components
    ]
    L_z = density.components["L_z"]
    summary = {
        "L_z_min": float(L_z.min()),
        "L_z_max": float(L_z.max()),
        "subtract_carrier": int(config.subtract_carrier),
    }
    emit(out_dir, "oam", "oam", columns, density.rows(), config.config_hash, summary, kind="map")
    return summary


def run_validate(config: RunConfig, out_dir: str) -> Dict:
    results = run_validation(config.state, config.constants, seed=config.seed)
    for result in results:
        print(result.line())
    rows = [(i + 1, r.value, int(r.passed)) for i, r in enumerate(results)]
    checks = {r.name: {"value": r.value, "passed": r.passed, "limit": r.limit} for r in results}
    emit(out_dir, "validate", "validate",
         [Column("check"), Column("value"), Column("passed")],
         rows, config.config_hash, {"checks": checks, "seed": config.seed})
    failed = sum(1 for r in results if not r.passed)
    return {"checks": len(results), "failed": failed}


RUNNERS = {
    "refract": run_refract,
    "trace": run_trace,
    "focus": run_focus,
    "phase": run_phase,
    "fringe": run_fringe,
    "solve-fields": run_solve_fields,
    "texture": run_texture,
    "oam": run_oam,
    "validate": run_validate,
}


def run_command(command: str, config: RunConfig, out_dir: str) -> Dict:
    """Run one subcommand, write its files into ``out_dir`` and return the summary."""
    if command not in RUNNERS:
        raise ValidationError(f"unknown command {command!r}")
    return RUNNERS[command](config, out_dir)


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Command-line flags win over the ``[run]`` section."""
    changes = {}
    if args.grid is not None:
        changes["grid"] = args.grid
    if args.cells is not None:
        changes["cells"] = args.cells
    if args.subtract_carrier:
        changes["subtract_carrier"] = True
    if args.seed is not None:
        changes["seed"] = args.seed
    config = replace(config, **changes)
    if config.grid < 2 or config.cells < 1 or config.seed < 0:
        raise ValidationError("--grid must be >= 2, --cells >= 1 and --seed >= 0")
    return config


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config_path", nargs="?", help="Path to the configuration file")
    common.add_argument("--config", dest="config_flag", help="Path to the configuration file")
    common.add_argument("--out", default="out", help="Directory for CSV, plot and JSON files")
    common.add_argument("--grid", type=int, help="Samples per axis for texture and oam maps")
    common.add_argument("--cells", type=int, help="Unit cells per half-axis for texture and oam maps")
    common.add_argument(
        "--subtract-carrier",
        action="store_true",
        help="Drop the forward-beam carrier terms from L_x and L_y",
    )
    common.add_argument("--seed", type=int, help="Seed for the randomized validation suites")

    parser = argparse.ArgumentParser(description="Magnetic Wollaston prism two-path simulator")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        commands.add_parser(name, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    path = args.config_flag or args.config_path
    if path is None:
        parser.error("a configuration file is required (positional or --config)")

    try:
        config = apply_overrides(load_config(path), args)
        summary = run_command(args.command, config, args.out)
    except SimulatorError as e:
        logging.error("Failed to run %s with %s: %s", args.command, path, e)
        sys.exit(e.exit_code)
    except OSError as e:
        logging.error("Failed to run %s with %s: %s", args.command, path, e)
        sys.exit(IO_EXIT_CODE)

    print(_summary_line(args.command, summary))
    if summary.get("failed"):
        sys.exit(CHECK_FAILED_EXIT_CODE)


if __name__ == "__main__":
    main()
