"""Locally clipped Voronoi control cells and their geometric diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .const import FACE_AREA_FLOOR, PointKind
from .errors import DegenerateCell, InsufficientSupport, InvalidBoundary

_LOGGER = logging.getLogger(__name__)

# Face markers for faces that do not separate two points
BOUNDARY = -1
SEED = -2


@dataclass
class CellFace:
    neighbor: int
    area: float
    normal: np.ndarray
    center: np.ndarray
    vertices: np.ndarray
    distance: float = 0.0
    midpoint: Optional[np.ndarray] = None

    @property
    def is_neighbor(self) -> bool:
        return self.neighbor >= 0


@dataclass
class ControlCell:
    owner: int
    x: np.ndarray
    faces: list[CellFace]
    volume: float
    defect: bool = False

    @property
    def neighbors(self) -> list[int]:
        return [face.neighbor for face in self.faces if face.is_neighbor]

    @property
    def boundary_area(self) -> float:
        return sum(face.area for face in self.faces if face.neighbor == BOUNDARY)


@dataclass
class GeometricResiduals:
    r0: np.ndarray
    r1: np.ndarray
    r1_mid: np.ndarray

    def __iter__(self):
        return iter((self.r0, self.r1, self.r1_mid))


@dataclass
class _Face3D:
    label: int
    normal: np.ndarray
    vertices: list[np.ndarray] = field(default_factory=list)


def _clip_polygon_2d(
    vertices: list[np.ndarray],
    labels: list[int],
    a: np.ndarray,
    c: float,
    label: int,
) -> tuple[list[np.ndarray], list[int]]:
    """Sutherland-Hodgman against a.x <= c; edge k runs from vertex k to k+1."""
    s = [float(a @ v) - c for v in vertices]
    if max(s) <= 0.0:
        return vertices, labels
    out_v, out_l = [], []
    n = len(vertices)
    for k in range(n):
        p, q = vertices[k], vertices[(k + 1) % n]
        sp, sq = s[k], s[(k + 1) % n]
        if sp <= 0.0:
            out_v.append(p)
            out_l.append(labels[k])
            if sq > 0.0:
                out_v.append(p + sp / (sp - sq) * (q - p))
                out_l.append(label)
        elif sq <= 0.0:
            out_v.append(p + sp / (sp - sq) * (q - p))
            out_l.append(labels[k])
    return out_v, out_l


def _clip_face(vertices: list[np.ndarray], a: np.ndarray, c: float, tol: float):
    """Clip one 3D face polygon; returns kept vertices and points on the plane."""
    s = [float(a @ v) - c for v in vertices]
    out, on_plane = [], []
    n = len(vertices)
    for k in range(n):
        p, q = vertices[k], vertices[(k + 1) % n]
        sp, sq = s[k], s[(k + 1) % n]
        if sp <= tol:
            out.append(p)
            if abs(sp) <= tol:
                on_plane.append(p)
            if sp < -tol and sq > tol:
                point = p + sp / (sp - sq) * (q - p)
                out.append(point)
                on_plane.append(point)
        elif sq < -tol:
            point = p + sp / (sp - sq) * (q - p)
            out.append(point)
            on_plane.append(point)
    return out, on_plane


def _order_cap(points: list[np.ndarray], normal: np.ndarray, tol: float) -> list[np.ndarray]:
    unique: list[np.ndarray] = []
    for point in points:
        if all(np.linalg.norm(point - u) > tol for u in unique):
            unique.append(point)
    if len(unique) < 3:
        return []
    center = np.mean(unique, axis=0)
    e1 = unique[0] - center
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    angles = [np.arctan2((u - center) @ e2, (u - center) @ e1) for u in unique]
    return [unique[k] for k in np.argsort(angles)]


def _clip_polytope_3d(faces: list[_Face3D], a: np.ndarray, c: float, label: int, tol: float):
    s_max = max(float(a @ v) - c for face in faces for v in face.vertices)
    if s_max <= tol:
        return faces
    clipped, cap_points = [], []
    for face in faces:
        vertices, on_plane = _clip_face(face.vertices, a, c, tol)
        cap_points.extend(on_plane)
        if len(vertices) >= 3:
            clipped.append(_Face3D(face.label, face.normal, vertices))
    cap = _order_cap(cap_points, a, tol)
    if cap:
        clipped.append(_Face3D(label, a, cap))
    return clipped


def _polygon_area_centroid(vertices: np.ndarray) -> tuple[float, np.ndarray]:
    """Area and centroid of a planar 3D polygon by triangle fan."""
    v0 = vertices[0]
    total_area, weighted = 0.0, np.zeros(3)
    total_vec = np.zeros(3)
    for k in range(1, len(vertices) - 1):
        cross = np.cross(vertices[k] - v0, vertices[k + 1] - v0)
        total_vec += cross
        tri = 0.5 * np.linalg.norm(cross)
        total_area += tri
        weighted += tri * (v0 + vertices[k] + vertices[k + 1]) / 3.0
    area = 0.5 * float(np.linalg.norm(total_vec))
    if total_area == 0.0:
        return 0.0, np.mean(vertices, axis=0)
    return area, weighted / total_area


def _seed_box_2d(x: np.ndarray, half: float):
    corners = [
        x + half * np.array(offset)
        for offset in ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))
    ]
    return corners, [SEED] * 4


def _seed_box_3d(x: np.ndarray, half: float) -> list[_Face3D]:
    faces = []
    for axis in range(3):
        u, w = [k for k in range(3) if k != axis]
        for sign in (-1.0, 1.0):
            normal = np.zeros(3)
            normal[axis] = sign
            quad = []
            for du, dw in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                point = x.copy()
                point[axis] += sign * half
                point[u] += du * half
                point[w] += dw * half
                quad.append(point)
            # counter-clockwise seen from outside
            if np.cross(quad[1] - quad[0], quad[2] - quad[0]) @ normal < 0.0:
                quad.reverse()
            faces.append(_Face3D(SEED, normal, quad))
    return faces


def _half_spaces(cloud, nbhd, i: int):
    """Bisector planes of the support, owner excluded, nearest first."""
    x_i = cloud.x[i]
    for j, d in zip(nbhd.members[1:], nbhd.distances[1:]):
        if d == 0.0:
            continue
        u = (cloud.x[j] - x_i) / d
        yield int(j), u, float(u @ (0.5 * (x_i + cloud.x[j]))), float(d)


def build_control_cell(cloud, nbhd, i: int) -> ControlCell:
    """Voronoi cell of point i restricted to its support, truncated at the boundary."""
    dim = cloud.dim
    x_i = cloud.x[i]
    scale = cloud.params.beta * cloud.h[i]
    if nbhd.count < dim + 2:
        raise InsufficientSupport(i, nbhd.count, dim + 2)

    boundary = cloud.kind[i] != PointKind.INTERIOR
    n_i = cloud.normal[i]
    if boundary and not np.isclose(np.linalg.norm(n_i), 1.0):
        raise InvalidBoundary(i)

    distances = {}
    tol = 1e-12 * scale
    if dim == 2:
        vertices, labels = _seed_box_2d(x_i, scale)
        if boundary:
            vertices, labels = _clip_polygon_2d(vertices, labels, n_i, float(n_i @ x_i), BOUNDARY)
        for j, u, c, d in _half_spaces(cloud, nbhd, i):
            if not vertices:
                break
            radius = max(np.linalg.norm(v - x_i) for v in vertices)
            if 0.5 * d > radius + tol:
                break
            vertices, labels = _clip_polygon_2d(vertices, labels, u, c, j)
            distances[j] = (u, d)
        polygons = [
            (labels[k], np.array([vertices[k], vertices[(k + 1) % len(vertices)]]))
            for k in range(len(vertices))
        ]
    else:
        faces3d = _seed_box_3d(x_i, scale)
        if boundary:
            faces3d = _clip_polytope_3d(faces3d, n_i, float(n_i @ x_i), BOUNDARY, tol)
        for j, u, c, d in _half_spaces(cloud, nbhd, i):
            if not faces3d:
                break
            radius = max(np.linalg.norm(v - x_i) for face in faces3d for v in face.vertices)
            if 0.5 * d > radius + tol:
                break
            faces3d = _clip_polytope_3d(faces3d, u, c, j, tol)
            distances[j] = (u, d)
        polygons = [(face.label, np.array(face.vertices), face.normal) for face in faces3d]

    if not polygons:
        raise DegenerateCell(i)

    floor = FACE_AREA_FLOOR * scale ** (dim - 1)
    all_vertices = np.vstack([poly[1] for poly in polygons])
    ref = all_vertices.mean(axis=0)
    faces, volume, defect = [], 0.0, False
    for entry in polygons:
        label, verts = entry[0], entry[1]
        if dim == 2:
            edge = verts[1] - verts[0]
            area = float(np.linalg.norm(edge))
            center = verts.mean(axis=0)
            geometric_normal = np.array([edge[1], -edge[0]]) / area if area > 0.0 else None
        else:
            area, center = _polygon_area_centroid(verts)
            geometric_normal = entry[2]
        if area < floor:
            continue
        if label >= 0:
            normal, distance = distances[label][0], distances[label][1]
            midpoint = 0.5 * (x_i + cloud.x[label])
        elif label == BOUNDARY:
            normal, distance, midpoint = n_i, 0.0, x_i
        else:
            normal, distance, midpoint = geometric_normal, 0.0, center
            defect = True
        faces.append(
            CellFace(
                neighbor=label,
                area=area,
                normal=normal,
                center=center,
                vertices=verts,
                distance=distance,
                midpoint=midpoint,
            )
        )
        volume += area * float((center - ref) @ normal) / dim

    if not faces or volume <= 0.0:
        raise DegenerateCell(i)
    return ControlCell(owner=i, x=x_i, faces=faces, volume=volume, defect=defect)


def build_cells(cloud, neighborhoods: Sequence) -> list[ControlCell]:
    cells = [build_control_cell(cloud, nbhd, nbhd.owner) for nbhd in neighborhoods]
    defects = sum(cell.defect for cell in cells)
    if defects:
        _LOGGER.debug("%d of %d control cells reach their seed box", defects, len(cells))
    return cells


def cell_geometric_residuals(cell: ControlCell) -> GeometricResiduals:
    """Zero- and first-order closure residuals (centroid and midpoint conventions)."""
    dim = len(cell.x)
    r0 = np.zeros(dim)
    moment = np.zeros((dim, dim))
    moment_mid = np.zeros((dim, dim))
    for face in cell.faces:
        r0 += face.normal * face.area
        moment += np.outer(face.normal, face.center) * face.area
        moment_mid += np.outer(face.normal, face.midpoint) * face.area
    identity = cell.volume * np.eye(dim)
    return GeometricResiduals(r0=r0, r1=moment - identity, r1_mid=moment_mid - identity)


def stitching_error(cells: Sequence[ControlCell]) -> float:
    """Mismatch of opposite neighbor faces, normalized by twice the total volume."""
    by_owner = {
        cell.owner: {face.neighbor: face for face in cell.faces if face.is_neighbor}
        for cell in cells
    }
    total = 0.0
    for cell in cells:
        for face in cell.faces:
            if not face.is_neighbor:
                continue
            flux = face.normal * face.area
            back = by_owner.get(face.neighbor, {}).get(cell.owner)
            if back is not None:
                flux = flux + back.normal * back.area
            total += float(np.linalg.norm(flux))
    return total / (2.0 * sum(cell.volume for cell in cells))
