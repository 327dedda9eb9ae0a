"""Tests for the CSV/JSON file formats."""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import ValidationError
from src.matrix_io import (
    jsonable,
    load_instance,
    read_json,
    read_matrix_csv,
    save_instance,
    write_json,
    write_matrix_csv,
)


def test_csv_roundtrip_is_bit_exact(tmp_path):
    A = np.random.default_rng(0).standard_normal((4, 3)) / 7.0
    path = tmp_path / "a.csv"
    write_matrix_csv(path, A)
    assert np.array_equal(read_matrix_csv(path), A)


def test_ragged_file_reports_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_matrix_csv(path)


def test_non_numeric_and_non_finite_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(ValidationError, match="non-numeric entry at line 2"):
        read_matrix_csv(path)
    path.write_text("1,nan\n")
    with pytest.raises(ValidationError, match="non-finite"):
        read_matrix_csv(path)


def test_blank_lines_skipped_and_empty_rejected(tmp_path):
    path = tmp_path / "blank.csv"
    path.write_text("1,2\n\n3,4\n")
    assert read_matrix_csv(path).shape == (2, 2)
    path.write_text("\n")
    with pytest.raises(ValidationError, match="no rows"):
        read_matrix_csv(path)


def test_jsonable_handles_numpy_and_non_finite():
    payload = jsonable({"a": np.float64(1.5), "b": np.int64(3), "c": math.nan,
                        "d": math.inf, "e": np.array([1.0, 2.0]), "f": np.bool_(True)})
    assert payload == {"a": 1.5, "b": 3, "c": None, "d": "inf", "e": [1.0, 2.0], "f": True}
    json.dumps(payload)


def test_read_json_rejects_garbage(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="invalid JSON"):
        read_json(path)
    path.write_text("[1, 2]")
    with pytest.raises(ValidationError, match="JSON object"):
        read_json(path)
    write_json(path, {"k": 1})
    assert read_json(path) == {"k": 1}


def test_instance_triplet_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    S0 = rng.standard_normal((3, 2))
    L0 = rng.standard_normal((4, 2))
    M0 = rng.standard_normal((4, 2))
    save_instance(tmp_path / "inst", S0, L0, M0, {"seed": 7})
    for name in ("S0.csv", "L0.csv", "M0.csv", "instance.json"):
        assert (tmp_path / "inst" / name).exists()
    S, L, M, spec = load_instance(tmp_path / "inst")
    assert np.array_equal(S, S0) and np.array_equal(L, L0) and np.array_equal(M, M0)
    assert spec == {"seed": 7}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
