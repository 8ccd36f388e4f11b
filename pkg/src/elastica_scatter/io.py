"""Plain-text formats for shapes, polygons, far fields, indicators and traces.

All floating point numbers are written with 17 significant digits so
files round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .geometry import Partition, ShapePoint
from .scatter import FarField

SHAPE_HEADER = "# shape-point v1"
FAR_FIELD_HEADER = "# far-field v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _cfmt(z: complex) -> str:
    return f"{_fmt(z.real)}{'+' if np.copysign(1, z.imag) > 0 else '-'}{_fmt(abs(z.imag))}j"


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# Shape points and polygons
# --------------------------------------------------------------------------


def shape_to_csv(m: ShapePoint) -> str:
    lines = [f"{SHAPE_HEADER}, n={m.n}"]
    tau = m.partition.tau[1:]
    lines += [f"{_fmt(t)},{_fmt(th)}" for t, th in zip(tau, m.theta)]
    lines.append(f"L,{_fmt(m.length)}")
    lines.append(f"p,{_fmt(m.base[0])},{_fmt(m.base[1])}")
    return "\n".join(lines) + "\n"


def shape_from_csv(text: str) -> ShapePoint:
    """Parse :func:`shape_to_csv` output; raises ``ValueError`` on malformed input."""
    rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
    if not rows or not rows[0].startswith(SHAPE_HEADER):
        raise ValueError("missing shape-point header")
    try:
        n = int(rows[0].split("n=")[1])
    except (IndexError, ValueError) as exc:
        raise ValueError("malformed shape-point header") from exc
    if len(rows) != n + 3:
        raise ValueError(f"expected {n} angle rows plus L and p rows, got {len(rows) - 1} rows")
    body = np.array([[float(v) for v in r.split(",")] for r in rows[1 : n + 1]])
    if body.shape != (n, 2):
        raise ValueError("angle rows must have two columns")
    length_row = rows[n + 1].split(",")
    base_row = rows[n + 2].split(",")
    if length_row[0] != "L" or base_row[0] != "p" or len(base_row) != 3:
        raise ValueError("malformed L or p row")
    tau = np.concatenate([[0.0], body[:, 0]])
    return ShapePoint(
        body[:, 1], float(length_row[1]), [float(base_row[1]), float(base_row[2])], Partition(tau)
    )


def read_shape(path) -> ShapePoint:
    return shape_from_csv(Path(path).read_text(encoding="utf-8"))


def write_shape(path, m: ShapePoint) -> None:
    write_text(path, shape_to_csv(m))


def polygon_to_csv(polygon) -> str:
    lines = ["x,y"] + [f"{_fmt(x)},{_fmt(y)}" for x, y in np.asarray(polygon)]
    return "\n".join(lines) + "\n"


def write_polygon(path, polygon) -> None:
    write_text(path, polygon_to_csv(polygon))


# --------------------------------------------------------------------------
# Far fields
# --------------------------------------------------------------------------


def far_field_to_csv(ff: FarField) -> str:
    """Rows are measurement directions, columns incident directions."""
    shape = ff.values.shape
    lines = [f"{FAR_FIELD_HEADER}, rows=measurement {shape[0]}, columns=incident {shape[1]}"]
    lines += [",".join(_cfmt(v) for v in row) for row in ff.values]
    return "\n".join(lines) + "\n"


def write_far_field(path, ff: FarField, metadata: dict | None = None) -> None:
    """Write the CSV and a JSON sidecar (``.json`` suffix) with grids and metadata."""
    path = Path(path)
    write_text(path, far_field_to_csv(ff))
    side = {
        "measurement_dirs": ff.measurement_dirs.tolist(),
        "incident_dirs": ff.incident_dirs.tolist(),
        "norm": ff.norm(),
    }
    side.update(metadata or {})
    write_json(path.with_suffix(".json"), side)


def read_far_field(path):
    """Read a far-field CSV and its sidecar; returns ``(FarField, metadata)``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    rows = [r for r in text.strip().splitlines() if r and not r.startswith("#")]
    values = np.array([[complex(v) for v in r.split(",")] for r in rows])
    meas = np.array(meta["measurement_dirs"], dtype=float)
    inc = np.array(meta["incident_dirs"], dtype=float)
    if values.shape != (len(meas), len(inc)):
        raise ValueError(
            f"far-field file has shape {values.shape}, sidecar grids imply "
            f"({len(meas)}, {len(inc)})"
        )
    return FarField(values, meas, inc), meta


# --------------------------------------------------------------------------
# Indicator fields
# --------------------------------------------------------------------------


def indicator_to_csv(field) -> str:
    pts = field.points
    chi = field.chi.ravel()
    inv = field.reciprocal.ravel()
    lines = ["z_x,z_y,chi,inv_chi"]
    lines += [
        f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(c)},{_fmt(r)}" for p, c, r in zip(pts, chi, inv)
    ]
    return "\n".join(lines) + "\n"
