"""CSV, key=value and legacy-VTK writers."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .cells import ControlCell
from .cloud import PointCloud
from .const import DIAGNOSTICS_HEADER, PointKind
from .metrics import StepRecord
from .stencils import OperatorLabel, StencilRow

_LOGGER = logging.getLogger(__name__)

_AXES = "xyz"
_VELOCITY = "uvw"


class DiagnosticsLog:
    """Diagnostics CSV written row by row so a failed run keeps its prefix."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._file = self.path.open("w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(DIAGNOSTICS_HEADER)

    def append(self, record: StepRecord) -> None:
        self._writer.writerow(record.csv_row())
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if value is None else value for value in row])
    return path


def write_summary(path: Path, values: dict[str, Any]) -> Path:
    path = Path(path)
    lines = [
        f"{key}={float(value)!r}" if isinstance(value, float) else f"{key}={value}"
        for key, value in values.items()
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_summary(path: Path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for line in Path(path).read_text().splitlines():
        if "=" not in line:
            continue
        key, raw = line.split("=", 1)
        try:
            values[key] = float(raw)
        except ValueError:
            values[key] = raw
    return values


def write_points_csv(path: Path, cloud: PointCloud) -> Path:
    dim = cloud.dim
    header = ["id", "kind", *_AXES[:dim], "h", *_VELOCITY[:dim], "p", "phi"]
    rows = (
        [
            int(cloud.ids[i]),
            PointKind(cloud.kind[i]).name.lower(),
            *cloud.x[i].tolist(),
            float(cloud.h[i]),
            *cloud.v[i].tolist(),
            float(cloud.p[i]),
            float(cloud.phi[i]),
        ]
        for i in range(len(cloud))
    )
    return write_table(path, header, rows)


def _points3(x: np.ndarray) -> np.ndarray:
    if x.shape[1] == 3:
        return x
    return np.column_stack((x, np.zeros(len(x))))


def _vtk_header(title: str) -> list[str]:
    return ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA"]


def write_points_vtk(path: Path, cloud: PointCloud) -> Path:
    n = len(cloud)
    lines = _vtk_header("fluxpoint points")
    lines.append(f"POINTS {n} double")
    lines.extend(" ".join(repr(c) for c in p) for p in _points3(cloud.x).tolist())
    lines.append(f"VERTICES {n} {2 * n}")
    lines.extend(f"1 {i}" for i in range(n))
    lines.append(f"POINT_DATA {n}")
    for name, values in (("p", cloud.p), ("phi", cloud.phi), ("h", cloud.h)):
        lines.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
        lines.extend(repr(float(v)) for v in values)
    lines.extend(["SCALARS kind int 1", "LOOKUP_TABLE default"])
    lines.extend(str(int(k)) for k in cloud.kind)
    lines.append("VECTORS velocity double")
    lines.extend(" ".join(repr(c) for c in v) for v in _points3(cloud.v).tolist())
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_cells_csv(path: Path, cells: Sequence[ControlCell]) -> Path:
    """One row per cell; faces as neighbor:area pairs (negative neighbor: boundary or seed)."""
    rows = (
        [
            cell.owner,
            repr(float(cell.volume)),
            int(cell.defect),
            len(cell.faces),
            ";".join(f"{face.neighbor}:{float(face.area)!r}" for face in cell.faces),
        ]
        for cell in cells
    )
    return write_table(path, ["owner", "volume", "defect", "n_faces", "faces"], rows)


def write_cells_vtk(path: Path, cells: Sequence[ControlCell]) -> Path:
    """Cell faces as polygons (3D) or closed outlines (2D)."""
    points: list[np.ndarray] = []
    polygons: list[list[int]] = []
    owners: list[int] = []
    for cell in cells:
        if len(cell.x) == 2:
            outline = [face.vertices[0] for face in cell.faces]
            polygons.append(list(range(len(points), len(points) + len(outline))))
            points.extend(outline)
            owners.append(cell.owner)
            continue
        for face in cell.faces:
            polygons.append(list(range(len(points), len(points) + len(face.vertices))))
            points.extend(face.vertices)
            owners.append(cell.owner)
    xyz = _points3(np.array(points)) if points else np.zeros((0, 3))
    lines = _vtk_header("fluxpoint control cells")
    lines.append(f"POINTS {len(xyz)} double")
    lines.extend(" ".join(repr(c) for c in p) for p in xyz.tolist())
    size = sum(len(poly) + 1 for poly in polygons)
    lines.append(f"POLYGONS {len(polygons)} {size}")
    lines.extend(" ".join(map(str, [len(poly), *poly])) for poly in polygons)
    lines.append(f"CELL_DATA {len(polygons)}")
    lines.extend(["SCALARS owner int 1", "LOOKUP_TABLE default"])
    lines.extend(str(owner) for owner in owners)
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_stencils_csv(
    path: Path, cloud: PointCloud, rows: Sequence[dict[OperatorLabel, StencilRow]]
) -> Path:
    """Debug dump: one line per operator row with member ids and coefficients."""
    table = (
        [
            int(cloud.ids[row.owner]),
            label.value,
            " ".join(str(int(cloud.ids[j])) for j in row.members),
            " ".join(repr(float(c)) for c in row.coeffs),
            int(row.constrained),
        ]
        for point_rows in rows
        for label, row in point_rows.items()
    )
    return write_table(path, ["owner", "label", "members", "coefficients", "constrained"], table)
