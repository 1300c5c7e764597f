"""Point cloud: generation, neighbor search, Lagrangian movement and management."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .const import (
    DEFAULT_BETA,
    DEFAULT_BOUNDARY_SPACING,
    DEFAULT_JITTER,
    DEFAULT_R_MAX,
    DEFAULT_R_MIN,
    DEFAULT_SEED,
    DEFAULT_SPACING,
    DEFAULT_V_REF,
    PointKind,
)
from .domain import DomainSpec
from .errors import IllConditioned, InsufficientSupport
from .stencils import MonomialBasis, interpolation_coefficients

_LOGGER = logging.getLogger(__name__)

FIELDS = ("phi", "p", "v", "v_prev")


@dataclass
class CloudParams:
    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    beta: float = DEFAULT_BETA
    c_dt: float = 0.01
    v_ref: float = DEFAULT_V_REF
    spacing: float = DEFAULT_SPACING
    boundary_spacing: float = DEFAULT_BOUNDARY_SPACING
    jitter: float = DEFAULT_JITTER
    margin: float = 0.75

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max < self.beta <= 1.0:
            raise ValueError(
                "cloud parameters must satisfy 0 < r_min < r_max < beta <= 1, got "
                f"r_min={self.r_min}, r_max={self.r_max}, beta={self.beta}"
            )
        if self.c_dt <= 0.0 or self.v_ref <= 0.0:
            raise ValueError("c_dt and v_ref must be positive")
        if self.spacing <= 0.0 or self.boundary_spacing <= 0.0 or self.jitter < 0.0:
            raise ValueError("spacing factors must be positive and jitter non-negative")


@dataclass
class Point:
    id: int
    x: np.ndarray
    h: float
    kind: PointKind
    n: Optional[np.ndarray]
    v: np.ndarray
    v_prev: np.ndarray
    phi: float
    p: float


class SpatialGrid:
    """Uniform bucket index; bucket edge length is fixed at construction."""

    def __init__(self, x: np.ndarray, cell_size: float):
        self.x = x
        self.cell_size = cell_size
        self.table: dict[tuple, list[int]] = {}
        keys = np.floor(x / cell_size).astype(np.int64)
        for index, key in enumerate(map(tuple, keys)):
            self.table.setdefault(key, []).append(index)
        self.table = {k: np.asarray(v, dtype=np.int64) for k, v in self.table.items()}

    def query(self, center: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of all points with distance <= radius."""
        lower = np.floor((center - radius) / self.cell_size).astype(np.int64)
        upper = np.floor((center + radius) / self.cell_size).astype(np.int64)
        buckets = [
            self.table[key]
            for key in itertools.product(*(range(a, b + 1) for a, b in zip(lower, upper)))
            if key in self.table
        ]
        if not buckets:
            return np.empty(0, dtype=np.int64), np.empty(0)
        candidates = np.concatenate(buckets)
        distances = np.sqrt(np.sum((self.x[candidates] - center) ** 2, axis=1))
        inside = distances <= radius * (1.0 + 1e-12)
        return candidates[inside], distances[inside]


@dataclass
class Neighborhood:
    owner: int
    members: np.ndarray
    distances: np.ndarray

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass
class PointCloud:
    x: np.ndarray
    h: np.ndarray
    kind: np.ndarray
    normal: np.ndarray
    v: np.ndarray
    v_prev: np.ndarray
    phi: np.ndarray
    p: np.ndarray
    ids: np.ndarray
    params: CloudParams = field(default_factory=CloudParams)
    next_id: int = 0
    _index: Optional[SpatialGrid] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_arrays(
        cls,
        x: np.ndarray,
        h: Union[float, np.ndarray],
        kind: Optional[np.ndarray] = None,
        normal: Optional[np.ndarray] = None,
        params: Optional[CloudParams] = None,
    ) -> "PointCloud":
        x = np.array(x, dtype=float)
        n, dim = x.shape
        if dim not in (2, 3):
            raise ValueError(f"point positions must be 2D or 3D, got dim={dim}")
        h = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
        if np.any(h <= 0.0):
            raise ValueError("smoothing length must be positive")
        kind = np.zeros(n, dtype=np.int8) if kind is None else np.asarray(kind, dtype=np.int8)
        normal = np.zeros((n, dim)) if normal is None else np.array(normal, dtype=float)
        return cls(
            x=x,
            h=h,
            kind=kind,
            normal=normal,
            v=np.zeros((n, dim)),
            v_prev=np.zeros((n, dim)),
            phi=np.zeros(n),
            p=np.zeros(n),
            ids=np.arange(n, dtype=np.int64),
            params=params or CloudParams(),
            next_id=n,
        )

    def __len__(self) -> int:
        return len(self.x)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def is_boundary(self) -> np.ndarray:
        return self.kind != PointKind.INTERIOR

    @property
    def spatial_index(self) -> SpatialGrid:
        if self._index is None:
            self._index = SpatialGrid(self.x, self.params.beta * float(self.h.max()))
        return self._index

    def invalidate_index(self) -> None:
        self._index = None

    def point(self, i: int) -> Point:
        boundary = self.kind[i] != PointKind.INTERIOR
        return Point(
            id=int(self.ids[i]),
            x=self.x[i],
            h=float(self.h[i]),
            kind=PointKind(self.kind[i]),
            n=self.normal[i] if boundary else None,
            v=self.v[i],
            v_prev=self.v_prev[i],
            phi=float(self.phi[i]),
            p=float(self.p[i]),
        )

    def copy(self) -> "PointCloud":
        return replace(
            self,
            **{
                name: getattr(self, name).copy()
                for name in ("x", "h", "kind", "normal", "v", "v_prev", "phi", "p", "ids")
            },
            _index=None,
        )

    def keep(self, mask: np.ndarray) -> None:
        for name in ("x", "h", "kind", "normal", "v", "v_prev", "phi", "p", "ids"):
            setattr(self, name, getattr(self, name)[mask])
        self.invalidate_index()

    def append(self, x: np.ndarray, h: np.ndarray, values: dict[str, np.ndarray]) -> None:
        count = len(x)
        dim = self.dim
        self.x = np.vstack((self.x, x))
        self.h = np.concatenate((self.h, h))
        self.kind = np.concatenate((self.kind, np.zeros(count, dtype=np.int8)))
        self.normal = np.vstack((self.normal, np.zeros((count, dim))))
        self.v = np.vstack((self.v, values["v"]))
        self.v_prev = np.vstack((self.v_prev, values["v_prev"]))
        self.phi = np.concatenate((self.phi, values["phi"]))
        self.p = np.concatenate((self.p, values["p"]))
        self.ids = np.concatenate(
            (self.ids, np.arange(self.next_id, self.next_id + count, dtype=np.int64))
        )
        self.next_id += count
        self.invalidate_index()

    def neighbors_of(self, center: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        return self.spatial_index.query(np.asarray(center, dtype=float), radius)


@dataclass
class ManagementReport:
    removed_outside: list[int] = field(default_factory=list)
    removed_close: list[int] = field(default_factory=list)
    inserted: list[int] = field(default_factory=list)
    # holes left open because their support was too small or degenerate; retried on every call
    skipped: int = 0

    @property
    def empty(self) -> bool:
        """True when the cloud was not changed."""
        return not (self.removed_outside or self.removed_close or self.inserted)


def discretize_domain(
    domain: DomainSpec,
    h: float,
    params: Optional[CloudParams] = None,
    seed: int = DEFAULT_SEED,
) -> PointCloud:
    """Fill a domain with boundary points and a jittered interior lattice."""
    if h <= 0.0:
        raise ValueError(f"smoothing length must be positive, got h={h}")
    params = params or CloudParams()
    boundary = domain.boundary_points(params.boundary_spacing * h)

    rng = np.random.default_rng(seed)
    sites = domain.lattice_sites(params.spacing * h, params.margin)
    interior = sites + rng.uniform(-0.5, 0.5, size=sites.shape) * params.jitter * h
    interior = interior[domain.contains(interior)]

    cloud = PointCloud.from_arrays(
        np.vstack((boundary.x, interior)),
        h,
        kind=np.concatenate((boundary.kind, np.zeros(len(interior), dtype=np.int8))),
        normal=np.vstack((boundary.normal, np.zeros_like(interior))),
        params=params,
    )
    removed = _remove_close_pairs(cloud, domain)
    _LOGGER.info(
        "Discretized %s with h=%g: %d boundary + %d interior points (%d dropped for spacing)",
        type(domain).__name__,
        h,
        len(boundary),
        len(interior) - len(removed),
        len(removed),
    )
    return cloud


def build_neighborhoods(
    cloud: PointCloud, required: Optional[int] = None
) -> list[Neighborhood]:
    """Support of every point: all points within beta*h_i, owner first.

    Raises InsufficientSupport for the first point with fewer than
    `required` members (default: the quadratic monomial count).
    """
    if required is None:
        required = MonomialBasis(cloud.dim).count
    beta = cloud.params.beta
    index = cloud.spatial_index
    neighborhoods = []
    for i in range(len(cloud)):
        members, distances = index.query(cloud.x[i], beta * cloud.h[i])
        others = members != i
        members, distances = members[others], distances[others]
        order = np.lexsort((members, distances))
        members = np.concatenate(([i], members[order]))
        distances = np.concatenate(([0.0], distances[order]))
        if len(members) < required:
            raise InsufficientSupport(int(i), len(members), required)
        neighborhoods.append(Neighborhood(owner=i, members=members, distances=distances))
    return neighborhoods


def compute_time_step(cloud: PointCloud) -> float:
    """CFL-like step C_dt * min(h/|v|), with a reference speed when at rest."""
    speed = np.linalg.norm(cloud.v, axis=1)
    moving = speed > 0.0
    if not np.any(moving):
        return cloud.params.c_dt * float(cloud.h.min()) / cloud.params.v_ref
    return cloud.params.c_dt * float(np.min(cloud.h[moving] / speed[moving]))


def move_points(cloud: PointCloud, dt: float) -> PointCloud:
    """Second-order Lagrangian update of interior points; boundary stays fixed."""
    interior = ~cloud.is_boundary
    v, v_prev = cloud.v[interior], cloud.v_prev[interior]
    cloud.x[interior] += v * dt + (v - v_prev) * dt
    cloud.v_prev = cloud.v.copy()
    cloud.invalidate_index()
    return cloud


def interpolation_row(
    cloud: PointCloud, x_new: np.ndarray, h: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Members and MLS coefficients reproducing quadratics at x_new."""
    h = float(cloud.h.max()) if h is None else h
    members, distances = cloud.neighbors_of(x_new, cloud.params.beta * h)
    order = np.lexsort((members, distances))
    members = members[order]
    required = MonomialBasis(cloud.dim).count
    if len(members) < required:
        raise InsufficientSupport(-1, len(members), required)
    coeffs = interpolation_coefficients(
        x_new, h, cloud.x[members], cloud.h[members]
    )
    return members, coeffs


def mls_interpolate(
    cloud: PointCloud,
    x_new: np.ndarray,
    field: Union[str, np.ndarray],
    h: Optional[float] = None,
) -> Union[float, np.ndarray]:
    """Value of a field at an arbitrary position by quadratic MLS."""
    values = getattr(cloud, field) if isinstance(field, str) else np.asarray(field)
    members, coeffs = interpolation_row(cloud, x_new, h)
    result = coeffs @ values[members]
    return float(result) if np.ndim(result) == 0 else result


def _remove_close_pairs(cloud: PointCloud, domain: DomainSpec) -> list[int]:
    """Enforce the r_min spacing rule, keeping the point nearer the boundary."""
    r_min = cloud.params.r_min
    index = SpatialGrid(cloud.x, r_min * float(cloud.h.max()))
    wall_distance = domain.boundary_distance(cloud.x)
    boundary = cloud.is_boundary
    pairs = []
    for i in range(len(cloud)):
        members, distances = index.query(cloud.x[i], r_min * cloud.h[i])
        for j, d in zip(members, distances):
            if j > i and d < r_min * min(cloud.h[i], cloud.h[j]):
                pairs.append((d, i, int(j)))
    pairs.sort()

    alive = np.ones(len(cloud), dtype=bool)
    for _, i, j in pairs:
        if not (alive[i] and alive[j]) or (boundary[i] and boundary[j]):
            continue
        if boundary[i] or boundary[j]:
            victim = j if boundary[i] else i
        elif wall_distance[i] > wall_distance[j]:
            victim = i
        else:
            victim = j
        alive[victim] = False

    removed = [int(k) for k in cloud.ids[~alive]]
    if removed:
        cloud.keep(alive)
    return removed


def manage_cloud(cloud: PointCloud, domain: DomainSpec) -> ManagementReport:
    """Delete escaped and crowded points, refill holes on the generation lattice."""
    report = ManagementReport()
    params = cloud.params

    outside = ~cloud.is_boundary & ~domain.contains(cloud.x)
    if np.any(outside):
        report.removed_outside = [int(k) for k in cloud.ids[outside]]
        cloud.keep(~outside)

    report.removed_close = _remove_close_pairs(cloud, domain)

    h = float(cloud.h.max())
    radius = params.r_max * h
    sites = domain.lattice_sites(params.spacing * h, params.margin)
    # boundary points do not cover sites: the first lattice row lies within r_max*h of the wall
    index = SpatialGrid(cloud.x[~cloud.is_boundary], radius)
    holes = []
    for site in sites:
        members, _ = index.query(site, radius)
        if len(members) or any(np.linalg.norm(site - other) <= radius for other in holes):
            continue
        holes.append(site)

    inserted_x, values = [], {name: [] for name in FIELDS}
    for site in holes:
        try:
            members, coeffs = interpolation_row(cloud, site, h)
        except (InsufficientSupport, IllConditioned) as err:
            report.skipped += 1
            _LOGGER.debug("Skipped insertion at %s: %s", site, err)
            continue
        inserted_x.append(site)
        for name in FIELDS:
            values[name].append(coeffs @ getattr(cloud, name)[members])

    if inserted_x:
        start = cloud.next_id
        cloud.append(
            np.array(inserted_x),
            np.full(len(inserted_x), h),
            {name: np.array(vals) for name, vals in values.items()},
        )
        report.inserted = list(range(start, cloud.next_id))

    if not report.empty:
        _LOGGER.debug(
            "Cloud management: %d escaped, %d crowded, %d inserted, %d skipped",
            len(report.removed_outside),
            len(report.removed_close),
            len(report.inserted),
            report.skipped,
        )
    return report
