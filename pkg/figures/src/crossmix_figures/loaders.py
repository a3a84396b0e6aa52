"""Parsing of the versioned simulator artifacts.

The renderer never recomputes physics: everything it draws comes from
these files.  A wrong or missing schema tag, a truncated row, or an
absent file is an :class:`InputError`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SNAPSHOTS_SCHEMA = "crossmix-snapshots-v1"
DIAGNOSTICS_SCHEMA = "crossmix-diagnostics-v1"
SWEEP_SCHEMA = "crossmix-sweep-v1"


class InputError(ValueError):
    """Input artifact missing, mislabelled, or malformed."""


def _read_versioned(path: Path, schema: str):
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# "):
        raise InputError(f"{path.name}: missing schema tag line")
    tag = lines[0][2:].strip()
    if tag != schema:
        raise InputError(f"{path.name}: header-version mismatch: got {tag!r}, want {schema!r}")
    header = lines[1].split(",")
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise InputError(
                f"{path.name}: row {lineno} has {len(parts)} fields, expected {len(header)}"
            )
        rows.append(parts)
    return header, rows


def _columns(header, rows):
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError as exc:
                raise InputError(f"row {i + 3}: non-numeric field {cell!r}") from exc
    return {name: data[:, j] for j, name in enumerate(header)}


def load_snapshots(path) -> dict:
    header, rows = _read_versioned(Path(path), SNAPSHOTS_SCHEMA)
    cols = _columns(header, rows)
    cols["times"] = np.unique(cols["t"])
    return cols


def load_diagnostics(path) -> dict:
    header, rows = _read_versioned(Path(path), DIAGNOSTICS_SCHEMA)
    return _columns(header, rows)


def load_sweep(path) -> dict:
    header, rows = _read_versioned(Path(path), SWEEP_SCHEMA)
    return _columns(header, rows)


def load_config_hash(summary_path) -> str:
    path = Path(summary_path)
    if not path.exists():
        return "unknown"
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path.name}: invalid JSON: {exc}") from exc
    return str(payload.get("config_hash", "unknown"))
