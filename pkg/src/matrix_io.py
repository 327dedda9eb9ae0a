"""Flat-file formats: headerless matrix CSV, JSON sidecars and instance triplets."""

import csv
import json
import logging
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from src.errors import ValidationError

logger = logging.getLogger(__name__)


def read_matrix_csv(path, name: str | None = None) -> np.ndarray:
    """Read a headerless CSV of decimal literals. Ragged or non-numeric rows are rejected."""
    path = Path(path)
    label = name or path.name
    rows: list[list[float]] = []
    width = None
    with path.open(newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            try:
                values = [float(cell) for cell in record]
            except ValueError:
                raise ValidationError(f"{label}: non-numeric entry at line {lineno}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValidationError(
                    f"{label}: ragged row at line {lineno} ({len(values)} values, expected {width})"
                )
            if not all(math.isfinite(v) for v in values):
                raise ValidationError(f"{label}: non-finite entry at line {lineno}")
            rows.append(values)
    if not rows:
        raise ValidationError(f"{label}: no rows")
    return np.array(rows, dtype=float)


def write_matrix_csv(path, A: np.ndarray):
    """Write with shortest round-trip float literals so reads are bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in A:
            writer.writerow([repr(float(v)) for v in row])
    logger.debug("Wrote %dx%d matrix to %s", A.shape[0], A.shape[1], path)


def jsonable(obj):
    """Convert numpy scalars/arrays, dataclasses and non-finite floats to JSON-safe values."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path.name}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path.name}: expected a JSON object")
    return data


def save_instance(out_dir, S0: np.ndarray, L0: np.ndarray, M0: np.ndarray, spec: dict) -> Path:
    """Write S0.csv, L0.csv, M0.csv and instance.json under ``out_dir``."""
    out_dir = Path(out_dir)
    write_matrix_csv(out_dir / "S0.csv", S0)
    write_matrix_csv(out_dir / "L0.csv", L0)
    write_matrix_csv(out_dir / "M0.csv", M0)
    write_json(out_dir / "instance.json", spec)
    logger.info("Instance saved to %s", out_dir)
    return out_dir


def load_instance(out_dir) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    out_dir = Path(out_dir)
    return (
        read_matrix_csv(out_dir / "S0.csv"),
        read_matrix_csv(out_dir / "L0.csv"),
        read_matrix_csv(out_dir / "M0.csv"),
        read_json(out_dir / "instance.json"),
    )
