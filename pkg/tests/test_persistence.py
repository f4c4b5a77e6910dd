import json

import numpy as np
import pytest

from vfpk.core.errors import SnapshotError
from vfpk.core.grid import SpatialGrid
from vfpk.core.persistence import (
    DENSITY_MAGIC,
    generate_run_id,
    load_table,
    read_csv,
    read_density_snapshot,
    read_state_snapshot,
    write_csv,
    write_density_snapshot,
    write_json,
    write_state_snapshot,
)


def test_density_snapshot_is_byte_stable(tmp_path):
    grid = SpatialGrid(2, (3.0, 4.0), (5, 7))
    rho = np.random.default_rng(0).random(grid.shape)
    v_star = -np.log(rho)
    first = write_density_snapshot(tmp_path / "a.rho", grid, rho, v_star)

    loaded_grid, loaded_rho, loaded_v = read_density_snapshot(first)
    assert loaded_grid == grid
    assert np.array_equal(loaded_rho, rho)
    assert np.array_equal(loaded_v, v_star)

    second = write_density_snapshot(tmp_path / "b.rho", loaded_grid, loaded_rho, loaded_v)
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().startswith(DENSITY_MAGIC)
    assert not list(tmp_path.glob("*.tmp"))


def test_state_snapshot_round_trip(tmp_path):
    coeffs = np.arange(12.0).reshape(3, 4)
    path = write_state_snapshot(tmp_path / "s.pss", coeffs, half_width=2.0, time=0.5, nu=1.5)
    state = read_state_snapshot(path)
    assert np.array_equal(state["coeffs"], coeffs)
    assert state["grid"] == SpatialGrid.uniform(1, 2.0, 4)
    assert (state["time"], state["nu"]) == (0.5, 1.5)


def test_corrupt_snapshots_are_rejected(tmp_path):
    grid = SpatialGrid.uniform(1, 1.0, 5)
    path = write_density_snapshot(tmp_path / "ok.rho", grid, np.ones(5), np.zeros(5))
    blob = path.read_bytes()

    (tmp_path / "short.rho").write_bytes(blob[:-8])
    (tmp_path / "long.rho").write_bytes(blob + b"\0")
    (tmp_path / "magic.rho").write_bytes(b"NOPE" + blob[4:])
    for name in ("short.rho", "long.rho", "magic.rho", "missing.rho"):
        with pytest.raises(SnapshotError):
            read_density_snapshot(tmp_path / name)
    with pytest.raises(SnapshotError):
        read_state_snapshot(path)


def test_csv_blanks_missing_and_non_finite_values(tmp_path):
    rows = [
        {"t": 0.0, "value": 0.1, "flag": True},
        {"t": 1.0, "value": float("nan"), "flag": False},
        {"t": 2.0},
    ]
    path = write_csv(tmp_path / "series.csv", ["t", "value", "flag"], rows)
    assert path.read_text().splitlines() == ["t,value,flag", "0,0.10000000000000001,1", "1,,0", "2,,"]
    columns, parsed = read_csv(path)
    assert columns == ["t", "value", "flag"]
    assert parsed[0]["value"] == 0.1
    assert parsed[1]["value"] is None
    assert parsed[2]["flag"] is None


def test_csv_row_width_is_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1\n")
    with pytest.raises(SnapshotError):
        read_csv(path)


def test_table_loader(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("# comment\nx,k\n0,1\n1,2\n")
    x, values = load_table(path)
    assert list(x) == [0.0, 1.0]
    assert list(values) == [1.0, 2.0]
    path.write_text("0,1\n")
    with pytest.raises(SnapshotError):
        load_table(path)


def test_json_reports_accept_numpy_values(tmp_path):
    path = write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": np.arange(3), "c": np.bool_(True)})
    assert json.loads(path.read_text()) == {"a": [0, 1, 2], "b": 1.5, "c": True}


def test_run_id_is_canonical():
    first = generate_run_id({"grid": {"nodes": 64, "dim": 1}, "kernel": {"family": "zero"}}, 3)
    second = generate_run_id({"kernel": {"family": "zero"}, "grid": {"dim": 1, "nodes": 64}}, 3)
    assert first == second
    assert len(first) == 64
    assert generate_run_id({"grid": {"nodes": 64, "dim": 1}, "kernel": {"family": "zero"}}, 4) != first
