"""CSV tables, plot script templates and JSON run metadata.

Data files are deterministic: no timestamps, ``\\n`` line endings and floats
written with 17 significant digits so they read back bit for bit.  Anything
that varies between runs goes into the JSON sidecar.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import __version__ as scipy_version

FLOAT_FORMAT = ".17g"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Column:
    name: str
    unit: str = "1"

    @property
    def label(self) -> str:
        return f"{self.name}[{self.unit}]"


@dataclass
class Table:
    """A parsed CSV: header metadata, columns and a float array of rows."""

    header: Dict[str, str]
    columns: List[Column]
    data: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def column(self, name: str) -> np.ndarray:
        for index, col in enumerate(self.columns):
            if col.name == name:
                return self.data[:, index]
        raise KeyError(name)


def _format(value: float) -> str:
    return format(float(value), FLOAT_FORMAT)


def write_csv(
    path: str,
    command: str,
    columns: Sequence[Column],
    rows: Iterable[Sequence[float]],
    config_hash: str,
    extra: Optional[Dict[str, str]] = None,
) -> str:
    """Write a table with a ``#`` header block and return its path.

    Header lines are ``# key: value``; ``columns`` lists ``name[unit]``
    labels in order.  The first non-comment line repeats the column names.
    """
    header = {
        "schema": str(SCHEMA_VERSION),
        "command": command,
        "config_sha256": config_hash,
        "columns": ",".join(col.label for col in columns),
    }
    for key, value in (extra or {}).items():
        header[key] = str(value)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([col.name for col in columns])
        count = 0
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} values, expected {len(columns)}")
            writer.writerow([_format(v) for v in row])
            count += 1
    logging.info("Wrote %d rows to %s", count, path)
    return path


def _parse_label(label: str) -> Column:
    if label.endswith("]") and "[" in label:
        name, unit = label[:-1].split("[", 1)
        return Column(name, unit)
    return Column(label)


def read_csv(path: str) -> Table:
    """Parse a table written by :func:`write_csv`."""
    header: Dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as f:
        lines = f.read().split("\n")
    body_start = 0
    for index, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = index
            break
        key, _, value = line[1:].strip().partition(":")
        header[key.strip()] = value.strip()
    labels = header.get("columns", "")
    columns = [_parse_label(label) for label in labels.split(",")] if labels else []
    reader = csv.reader(line for line in lines[body_start:] if line)
    names = next(reader, [])
    if [col.name for col in columns] != names:
        raise ValueError(f"column row {names} does not match header {labels!r}")
    rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return Table(header=header, columns=columns, data=data)


_PLOT_TEMPLATE = '''"""Plot {csv_name} (generated by wollaston_simulator {command})."""

import numpy as np
import matplotlib.pyplot as plt

data = np.genfromtxt("{csv_name}", delimiter=",", comments="#", names=True)
{body}
plt.tight_layout()
plt.savefig("{stem}.png", dpi=200)
'''

_LINE_BODY = '''fig, ax = plt.subplots()
{lines}
ax.set_xlabel("{x_label}")
ax.legend()'''

_MAP_BODY = '''x = np.unique(data["{x}"])
y = np.unique(data["{y}"])
fig, ax = plt.subplots()
image = ax.pcolormesh(x, y, data["{z}"].reshape(len(y), len(x)), shading="auto", cmap="RdBu_r")
fig.colorbar(image, ax=ax, label="{z_label}")
ax.set_aspect("equal")
ax.set_xlabel("{x_label}")
ax.set_ylabel("{y_label}")'''


def write_plot_script(
    path: str,
    csv_name: str,
    command: str,
    columns: Sequence[Column],
    kind: str = "line",
) -> str:
    """Emit a matplotlib script that plots the CSV written next to it.

    ``kind="line"`` plots every column against the first; ``kind="map"``
    draws the third column as a colour map over the first two.
    """
    if kind == "map":
        x, y, z = columns[0], columns[1], columns[2]
        body = _MAP_BODY.format(
            x=x.name, y=y.name, z=z.name, x_label=x.label, y_label=y.label, z_label=z.label
        )
    else:
        x = columns[0]
        lines = "\n".join(
            f'ax.plot(data["{x.name}"], data["{col.name}"], label="{col.label}")'
            for col in columns[1:]
        )
        body = _LINE_BODY.format(lines=lines, x_label=x.label)
    stem = os.path.splitext(csv_name)[0]
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(_PLOT_TEMPLATE.format(csv_name=csv_name, command=command, body=body, stem=stem))
    return path


def write_metadata(path: str, command: str, config_hash: str, outputs: Sequence[str], summary: Dict) -> str:
    """JSON sidecar with run provenance; the only file that carries a timestamp."""
    metadata = {
        "command": command,
        "config_sha256": config_hash,
        "outputs": [os.path.basename(p) for p in outputs],
        "summary": summary,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy_version,
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(metadata, indent=2, sort_keys=True))
        f.write("\n")
    return path


def emit(
    out_dir: str,
    stem: str,
    command: str,
    columns: Sequence[Column],
    rows: Iterable[Sequence[float]],
    config_hash: str,
    summary: Dict,
    kind: str = "line",
    extra: Optional[Dict[str, str]] = None,
) -> Tuple[str, str, str]:
    """Write ``<stem>.csv``, ``plot_<stem>.py`` and ``<stem>.json`` into ``out_dir``."""
    csv_path = write_csv(
        os.path.join(out_dir, f"{stem}.csv"), command, columns, rows, config_hash, extra
    )
    plot_path = write_plot_script(
        os.path.join(out_dir, f"plot_{stem}.py"), f"{stem}.csv", command, columns, kind
    )
    meta_path = write_metadata(
        os.path.join(out_dir, f"{stem}.json"), command, config_hash, [csv_path, plot_path], summary
    )
    return csv_path, plot_path, meta_path
