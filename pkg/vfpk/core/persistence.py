"""
Snapshots, CSV series and JSON reports.

Binary snapshots are little-endian: a magic string, uint32 sizes, float64
box data, then row-major float64 arrays. Every writer goes through a temporary
file in the target directory and os.replace, so a crashed run never leaves a
half-written file behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from vfpk.core.errors import SnapshotError
from vfpk.core.grid import SpatialGrid

DENSITY_MAGIC = b"VFPK-RHO1"
STATE_MAGIC = b"VFPK-PSS1"

PathLike = Union[str, Path]


def _atomic_write(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _floats(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, blob: bytes, path: PathLike):
        self.blob = blob
        self.offset = 0
        self.path = str(path)

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise SnapshotError("snapshot is truncated", path=self.path, offset=self.offset)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def finish(self) -> None:
        if self.offset != len(self.blob):
            raise SnapshotError("snapshot has trailing bytes", path=self.path)


def _open(path: PathLike, magic: bytes) -> _Reader:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise SnapshotError(f"cannot read snapshot: {e}", path=str(path)) from e
    reader = _Reader(blob, path)
    if reader.take(len(magic)) != magic:
        raise SnapshotError("bad snapshot magic", path=str(path), expected=magic.decode())
    return reader


def write_density_snapshot(path: PathLike, grid: SpatialGrid, rho: np.ndarray, v_star: np.ndarray) -> Path:
    header = DENSITY_MAGIC + struct.pack(f"<I{grid.dim}I", grid.dim, *grid.nodes)
    header += struct.pack(f"<{grid.dim}d", *grid.half_widths)
    return _atomic_write(path, header + _floats(rho) + _floats(v_star))


def read_density_snapshot(path: PathLike) -> Tuple[SpatialGrid, np.ndarray, np.ndarray]:
    reader = _open(path, DENSITY_MAGIC)
    (dim,) = reader.unpack("<I")
    if dim < 1 or dim > 3:
        raise SnapshotError("invalid dimension in snapshot", path=str(path), dim=dim)
    nodes = reader.unpack(f"<{dim}I")
    half_widths = reader.unpack(f"<{dim}d")
    grid = SpatialGrid(dim, half_widths, nodes)
    rho = reader.floats(grid.size).reshape(grid.shape)
    v_star = reader.floats(grid.size).reshape(grid.shape)
    reader.finish()
    return grid, rho, v_star


def write_state_snapshot(path: PathLike, coeffs: np.ndarray, half_width: float, time: float, nu: float) -> Path:
    coeffs = np.asarray(coeffs)
    n_modes, n_x = coeffs.shape
    header = STATE_MAGIC + struct.pack("<II3d", n_modes, n_x, half_width, time, nu)
    return _atomic_write(path, header + _floats(coeffs))


def read_state_snapshot(path: PathLike) -> Dict[str, Any]:
    reader = _open(path, STATE_MAGIC)
    n_modes, n_x, half_width, time, nu = reader.unpack("<II3d")
    coeffs = reader.floats(n_modes * n_x).reshape(n_modes, n_x)
    reader.finish()
    return {
        "coeffs": coeffs,
        "grid": SpatialGrid.uniform(1, half_width, n_x),
        "time": time,
        "nu": nu,
    }


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "" if not np.isfinite(value) else format(float(value), ".17g")
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """Header row plus one row per record; missing and non-finite values are blank."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(columns))
    for row in rows:
        writer.writerow([_cell(row.get(name)) for name in columns])
    return _atomic_write(path, buffer.getvalue().encode("utf-8"))


def _parse_cell(text: str) -> Optional[Union[float, str]]:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path: PathLike) -> Tuple[List[str], List[Dict[str, Any]]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            columns = next(reader)
        except StopIteration as e:
            raise SnapshotError("CSV file is empty", path=str(path)) from e
        rows = []
        for line in reader:
            if len(line) != len(columns):
                raise SnapshotError("CSV row has the wrong column count", path=str(path), row=len(rows) + 1)
            rows.append({name: _parse_cell(cell) for name, cell in zip(columns, line)})
    return columns, rows


def load_table(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Two-column (x, value) CSV; a non-numeric first row is taken as a header."""
    xs, values = [], []
    header_seen = False
    with open(path, newline="") as handle:
        for index, line in enumerate(csv.reader(handle)):
            if not line or line[0].startswith("#"):
                continue
            if len(line) < 2:
                raise SnapshotError("table rows need two columns", path=str(path), row=index)
            try:
                x, value = float(line[0]), float(line[1])
            except ValueError as e:
                if not xs and not header_seen:
                    header_seen = True
                    continue
                raise SnapshotError("non-numeric table entry", path=str(path), row=index) from e
            xs.append(x)
            values.append(value)
    if len(xs) < 2:
        raise SnapshotError("table needs at least two rows", path=str(path))
    return np.array(xs), np.array(values)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default, allow_nan=True)
    return _atomic_write(path, (text + "\n").encode("utf-8"))


def generate_run_id(config: Dict[str, Any], seed: int) -> str:
    canonical = {"config": config, "seed": int(seed)}
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=_json_default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
