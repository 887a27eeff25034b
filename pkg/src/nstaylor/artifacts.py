"""Readers and writers for every file the command line emits.

Field dumps are a UTF-8 header of ``key: value`` lines, a blank line, then raw
little-endian float64 samples in x-fastest order::

    format: nstaylor-field/1
    field: u
    order: 3
    domain: torus
    nx: 32
    ...

Trig-polynomial coefficients are written as text, one ``kx ky kz re im`` line
per term. Diagnostics are CSV; summaries are JSON with sorted keys so repeated
runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .field import GridField, GridSpec
from .greensfn import FreeSpaceGrid
from .trigpoly import TrigPoly, tp_dumps, tp_loads

FIELD_FORMAT = "nstaylor-field/1"
_LE_FLOAT64 = np.dtype("<f8")


def _header_bytes(header: dict) -> bytes:
    lines = [f"{k}: {v}" for k, v in header.items()]
    return ("\n".join(lines) + "\n\n").encode("utf-8")


def field_to_bytes(f: GridField | FreeSpaceGrid, name: str, order: int | None = None) -> bytes:
    header = {"format": FIELD_FORMAT, "field": name, "order": "" if order is None else order}
    if isinstance(f, GridField):
        nx, ny, nz = f.spec.shape
        lx, ly, lz = f.spec.lengths
        header.update(domain="torus", nx=nx, ny=ny, nz=nz, lx=repr(lx), ly=repr(ly), lz=repr(lz))
        header["dealias"] = f.spec.dealias_rule.value
        flat = f.flat_values()
    else:
        n = f.n_per_axis
        side = repr(2.0 * f.half_width)
        header.update(domain="free-space", nx=n, ny=n, nz=n, lx=side, ly=side, lz=side)
        header["half_width"] = repr(f.half_width)
        flat = f.flat_values()
    header.update(dtype="float64-le", layout="x-fastest")
    return _header_bytes(header) + np.ascontiguousarray(flat, dtype=_LE_FLOAT64).tobytes()


def write_field(path, f, name: str, order: int | None = None) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(f, name, order))
    return path


def parse_field_bytes(data: bytes):
    """``(header, field)`` from dump bytes; the field type follows ``domain``."""
    sep = data.find(b"\n\n")
    if sep < 0:
        raise ValueError("field dump has no header terminator")
    header = {}
    for line in data[:sep].decode("utf-8").splitlines():
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    if header.get("format") != FIELD_FORMAT:
        raise ValueError(f"unsupported field format {header.get('format')!r}")
    nx, ny, nz = (int(header[k]) for k in ("nx", "ny", "nz"))
    flat = np.frombuffer(data[sep + 2 :], dtype=_LE_FLOAT64).astype(float)
    if flat.size != nx * ny * nz:
        raise ValueError(f"expected {nx * ny * nz} samples, found {flat.size}")
    values = flat.reshape((nx, ny, nz), order="F")
    if header["domain"] == "torus":
        spec = GridSpec(
            nx, ny, nz, float(header["lx"]), float(header["ly"]), float(header["lz"]),
            header.get("dealias", "two_thirds"),
        )
        return header, GridField(spec, values)
    return header, FreeSpaceGrid(float(header["half_width"]), nx, values)


def read_field(path):
    return parse_field_bytes(Path(path).read_bytes())


def write_trigpoly(path, a: TrigPoly) -> Path:
    path = Path(path)
    path.write_text(tp_dumps(a), encoding="utf-8")
    return path


def read_trigpoly(path) -> TrigPoly:
    return tp_loads(Path(path).read_text(encoding="utf-8"))


DIAGNOSTICS_FIELDS = (
    "order",
    "max_norm_u",
    "max_norm_p",
    "max_divergence",
    "term_count_or_grid",
    "wall_time_ms",
)


def write_diagnostics(path, diagnostics, timing: bool = False) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTICS_FIELDS)
        for d in diagnostics:
            w.writerow(d.csv_row(timing))
    return path


def read_diagnostics(path) -> list[dict]:
    """Rows of a diagnostics CSV with numeric columns parsed (empty cells -> None)."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            missing = set(DIAGNOSTICS_FIELDS) - set(raw)
            if missing:
                raise ValueError(f"diagnostics file lacks columns {sorted(missing)}")
            rows.append(
                {
                    "order": int(raw["order"]),
                    "max_norm_u": float(raw["max_norm_u"]),
                    "max_norm_p": _opt_float(raw["max_norm_p"]),
                    "max_divergence": float(raw["max_divergence"]),
                    "term_count_or_grid": raw["term_count_or_grid"],
                    "wall_time_ms": _opt_float(raw["wall_time_ms"]),
                }
            )
    return rows


def _opt_float(s: str):
    return None if s == "" else float(s)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def read_radius_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            {k: (v if v == "" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
