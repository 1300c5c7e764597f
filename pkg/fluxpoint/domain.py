"""Domain geometry: membership, boundary distance, boundary sampling and lattices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .const import CORNER_KIND_PRIORITY, PointKind
from .errors import InvalidDomain

_AXES = "xyz"
_SIDE_ALIASES_2D = {"left": "x-", "right": "x+", "bottom": "y-", "top": "y+"}


@dataclass
class BoundarySample:
    x: np.ndarray
    normal: np.ndarray
    kind: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


def side_name(axis: int, upper: bool) -> str:
    return f"{_AXES[axis]}{'+' if upper else '-'}"


def _normalize_side(name: str) -> str:
    return _SIDE_ALIASES_2D.get(name, name)


def _box_sdf(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Signed distance to an axis-aligned box, negative inside."""
    outside = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    inside = np.minimum(np.min(x - lo, axis=-1), np.min(hi - x, axis=-1))
    return np.where(inside > 0.0, -inside, np.linalg.norm(outside, axis=-1))


def _merge_duplicates(
    xs: list[np.ndarray], normals: list[np.ndarray], kinds: list[int], tol: float
) -> BoundarySample:
    """Merge points sampled twice (shared edges and corners).

    The merged point gets the normalized sum of the contributing normals and
    the highest-priority kind.
    """
    merged: dict[tuple, list] = {}
    order: list[tuple] = []
    for x, n, kind in zip(xs, normals, kinds):
        key = tuple(np.round(x / tol).astype(np.int64))
        if key not in merged:
            merged[key] = [x, n.copy(), kind]
            order.append(key)
        else:
            entry = merged[key]
            entry[1] = entry[1] + n
            if CORNER_KIND_PRIORITY.index(kind) < CORNER_KIND_PRIORITY.index(entry[2]):
                entry[2] = kind
    x = np.array([merged[k][0] for k in order])
    n = np.array([merged[k][1] for k in order])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    kind = np.array([merged[k][2] for k in order], dtype=np.int8)
    return BoundarySample(x=x, normal=n, kind=kind)


def _box_surface(
    lo: np.ndarray,
    hi: np.ndarray,
    spacing: float,
    kinds: dict[str, PointKind],
    default_kind: PointKind,
    sign: float,
) -> tuple[list, list, list]:
    """Sample every face of a box; sign=-1 flips normals (box is a hole)."""
    dim = len(lo)
    xs, normals, point_kinds = [], [], []
    for axis in range(dim):
        others = [k for k in range(dim) if k != axis]
        grids = []
        for k in others:
            n_seg = max(1, math.ceil((hi[k] - lo[k]) / spacing - 1e-9))
            grids.append(np.linspace(lo[k], hi[k], n_seg + 1))
        for upper in (False, True):
            normal = np.zeros(dim)
            normal[axis] = sign * (1.0 if upper else -1.0)
            kind = kinds.get(side_name(axis, upper), default_kind)
            for coords in itertools.product(*grids):
                x = np.empty(dim)
                x[axis] = hi[axis] if upper else lo[axis]
                x[others] = coords
                xs.append(x)
                normals.append(normal)
                point_kinds.append(kind)
    return xs, normals, point_kinds


class DomainSpec:
    """Base class of the supported domains."""

    dim: int

    def measure(self) -> float:
        raise NotImplementedError

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive inside the domain."""
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def boundary_points(self, spacing: float) -> BoundarySample:
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.signed_distance(np.atleast_2d(x)) > 0.0

    def boundary_distance(self, x: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_distance(np.atleast_2d(x)))

    def lattice_sites(self, pitch: float, margin: float) -> np.ndarray:
        """Regular lattice sites at least margin*pitch inside the domain.

        The pitch is stretched per axis so that the lattice fits the bounding
        box exactly.
        """
        lo, hi = self.bounds()
        axes = []
        for k in range(self.dim):
            n = max(1, round((hi[k] - lo[k]) / pitch))
            axes.append(np.linspace(lo[k], hi[k], n + 1))
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        keep = self.signed_distance(grid) >= margin * pitch * (1.0 - 1e-9)
        return grid[keep]

    def _check(self) -> None:
        if not self.measure() > 0.0:
            raise InvalidDomain(f"{type(self).__name__} has zero measure")


@dataclass
class Box(DomainSpec):
    """Axis-aligned rectangle (2D) or box (3D)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    kinds: dict[str, PointKind] = field(default_factory=dict)
    default_kind: PointKind = PointKind.WALL

    def __post_init__(self):
        self._lo = np.asarray(self.lo, dtype=float)
        self._hi = np.asarray(self.hi, dtype=float)
        if self._lo.shape != self._hi.shape or len(self._lo) not in (2, 3):
            raise InvalidDomain("box corners must both be 2D or both 3D")
        self.dim = len(self._lo)
        self.kinds = {_normalize_side(k): PointKind(v) for k, v in self.kinds.items()}
        self._check()

    def measure(self) -> float:
        return float(np.prod(np.maximum(self._hi - self._lo, 0.0)))

    def bounds(self):
        return self._lo, self._hi

    def signed_distance(self, x):
        return -_box_sdf(x, self._lo, self._hi)

    def boundary_points(self, spacing):
        xs, normals, kinds = _box_surface(
            self._lo, self._hi, spacing, self.kinds, self.default_kind, 1.0
        )
        return _merge_duplicates(xs, normals, kinds, tol=1e-9 * spacing)


Rectangle = Box


@dataclass
class RectangleWithHole(DomainSpec):
    """Rectangle with a rectangular obstacle cut out (square cylinder)."""

    lo: tuple[float, float]
    hi: tuple[float, float]
    hole_lo: tuple[float, float]
    hole_hi: tuple[float, float]
    kinds: dict[str, PointKind] = field(default_factory=dict)
    default_kind: PointKind = PointKind.WALL
    hole_kind: PointKind = PointKind.WALL

    def __post_init__(self):
        self._lo = np.asarray(self.lo, dtype=float)
        self._hi = np.asarray(self.hi, dtype=float)
        self._hole_lo = np.asarray(self.hole_lo, dtype=float)
        self._hole_hi = np.asarray(self.hole_hi, dtype=float)
        self.dim = 2
        self.kinds = {_normalize_side(k): PointKind(v) for k, v in self.kinds.items()}
        if np.any(self._hole_lo <= self._lo) or np.any(self._hole_hi >= self._hi):
            raise InvalidDomain("obstacle must lie strictly inside the channel")
        self._check()

    def measure(self) -> float:
        outer = float(np.prod(np.maximum(self._hi - self._lo, 0.0)))
        hole = float(np.prod(np.maximum(self._hole_hi - self._hole_lo, 0.0)))
        return outer - hole

    def bounds(self):
        return self._lo, self._hi

    def signed_distance(self, x):
        outer = -_box_sdf(x, self._lo, self._hi)
        hole = _box_sdf(x, self._hole_lo, self._hole_hi)
        return np.minimum(outer, hole)

    def boundary_points(self, spacing):
        xs, normals, kinds = _box_surface(
            self._lo, self._hi, spacing, self.kinds, self.default_kind, 1.0
        )
        hole_xs, hole_normals, hole_kinds = _box_surface(
            self._hole_lo, self._hole_hi, spacing, {}, self.hole_kind, -1.0
        )
        return _merge_duplicates(
            xs + hole_xs, normals + hole_normals, kinds + hole_kinds, tol=1e-9 * spacing
        )


@dataclass
class Sphere(DomainSpec):
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    kind: PointKind = PointKind.WALL

    def __post_init__(self):
        self._center = np.asarray(self.center, dtype=float)
        if self._center.shape != (3,):
            raise InvalidDomain("sphere center must be 3D")
        self.dim = 3
        self._check()

    def measure(self) -> float:
        return 4.0 / 3.0 * math.pi * max(self.radius, 0.0) ** 3

    def bounds(self):
        return self._center - self.radius, self._center + self.radius

    def signed_distance(self, x):
        return self.radius - np.linalg.norm(x - self._center, axis=-1)

    def boundary_points(self, spacing):
        # Fibonacci lattice, one point per spacing**2 of surface
        n = max(8, round(4.0 * math.pi * self.radius**2 / spacing**2))
        k = np.arange(n) + 0.5
        polar = np.arccos(1.0 - 2.0 * k / n)
        azimuth = math.pi * (1.0 + math.sqrt(5.0)) * k
        normal = np.column_stack(
            (np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar))
        )
        return BoundarySample(
            x=self._center + self.radius * normal,
            normal=normal,
            kind=np.full(n, self.kind, dtype=np.int8),
        )
