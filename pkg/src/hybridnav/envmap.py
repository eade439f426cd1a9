"""Voxel occupancy grids, exact Euclidean signed distance fields and
trilinear distance/gradient queries.

Sign convention of the distance field (also written into every dumped
header): free voxels hold the distance in meters from their center to the
nearest occupied voxel center; occupied voxels hold ``-(d_free - res)``
where ``d_free`` is the distance to the nearest free voxel center. Voxels on
the occupied side of an obstacle surface therefore read exactly 0, and the
field is 1-Lipschitz across the free/occupied boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

DEFAULT_RESOLUTION = 0.1
# stored in place of a distance when no occupied voxel exists
ESDF_SENTINEL = 1.0e4
_EDT_INF = 1.0e20


@dataclass
class ObstacleSet:
    """Axis-aligned boxes and vertical cylinders, in meters.

    ``boxes`` holds ``(min_corner, max_corner)`` pairs and ``cylinders``
    holds ``(center_xy, radius, z_min, z_max)`` tuples.
    """

    boxes: list = field(default_factory=list)
    cylinders: list = field(default_factory=list)

    def __post_init__(self):
        self.boxes = [
            (np.asarray(lo, dtype=float).reshape(3), np.asarray(hi, dtype=float).reshape(3))
            for lo, hi in self.boxes
        ]
        self.cylinders = [
            (np.asarray(c, dtype=float).reshape(2), float(r), float(z0), float(z1))
            for c, r, z0, z1 in self.cylinders
        ]
        for lo, hi in self.boxes:
            if not np.all(lo < hi):
                raise ValueError(f"box min {lo} must be below max {hi} on every axis")
        for c, r, z0, z1 in self.cylinders:
            if r <= 0:
                raise ValueError(f"cylinder radius must be positive, got {r}")
            if not z0 < z1:
                raise ValueError(f"cylinder z range [{z0}, {z1}] is empty")

    def __len__(self):
        return len(self.boxes) + len(self.cylinders)

    def to_dict(self) -> dict:
        return {
            "boxes": [[lo.tolist(), hi.tolist()] for lo, hi in self.boxes],
            "cylinders": [
                {"center": c.tolist(), "radius": r, "z_min": z0, "z_max": z1}
                for c, r, z0, z1 in self.cylinders
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObstacleSet":
        cyl = [(c["center"], c["radius"], c["z_min"], c["z_max"]) for c in d.get("cylinders", [])]
        return cls(boxes=[tuple(b) for b in d.get("boxes", [])], cylinders=cyl)


@dataclass
class OccupancyGrid:
    origin: np.ndarray
    resolution: float
    occupied: np.ndarray  # bool, shape == dims, indexed [ix, iy, iz]

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.occupied = np.asarray(self.occupied, dtype=bool)
        if self.occupied.ndim != 3 or self.occupied.size == 0:
            raise ValueError("occupancy grid must be a non-empty 3D array")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    @property
    def dims(self) -> tuple:
        return self.occupied.shape

    @property
    def upper(self) -> np.ndarray:
        """World coordinate of the far corner of the grid."""
        return self.origin + np.asarray(self.dims) * self.resolution

    def center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.resolution

    def index_of(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Voxel indices containing ``points`` (n, 3), plus an in-bounds mask."""
        idx = np.floor((np.asarray(points, dtype=float) - self.origin) / self.resolution).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=-1)
        return idx, inside

    def is_occupied(self, points, outside: bool = True) -> np.ndarray:
        """Occupancy lookup; points outside the grid report ``outside``."""
        idx, inside = self.index_of(points)
        out = np.full(inside.shape, outside, dtype=bool)
        ii = idx[inside]
        out[inside] = self.occupied[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def contains(self, points) -> np.ndarray:
        return self.index_of(points)[1]


def grid_from_obstacles(obstacles: ObstacleSet, origin, dims, resolution: float = DEFAULT_RESOLUTION) -> OccupancyGrid:
    """Rasterize obstacle primitives: a voxel is occupied iff its center lies
    inside (boundary inclusive) any primitive."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) <= 0:
        raise ValueError(f"grid dims must be three positive integers, got {dims}")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    origin = np.asarray(origin, dtype=float).reshape(3)
    xs, ys, zs = (origin[a] + (np.arange(dims[a]) + 0.5) * resolution for a in range(3))
    occ = np.zeros(dims, dtype=bool)
    for lo, hi in obstacles.boxes:
        mx = (xs >= lo[0]) & (xs <= hi[0])
        my = (ys >= lo[1]) & (ys <= hi[1])
        mz = (zs >= lo[2]) & (zs <= hi[2])
        occ |= mx[:, None, None] & my[None, :, None] & mz[None, None, :]
    for c, r, z0, z1 in obstacles.cylinders:
        dxy = (xs[:, None] - c[0]) ** 2 + (ys[None, :] - c[1]) ** 2 <= r * r
        mz = (zs >= z0) & (zs <= z1)
        occ |= dxy[:, :, None] & mz[None, None, :]
    return OccupancyGrid(origin, resolution, occ)


@numba.njit(cache=True)
def _edt_1d(f, d, v, z):
    # Felzenszwalb & Huttenlocher lower envelope of parabolas
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        d[q] = dq * dq + f[v[k]]


@numba.njit(cache=True)
def _edt_axis(grid, axis):
    # grid is modified in place along the given axis
    nx, ny, nz = grid.shape
    n = grid.shape[axis]
    f = np.empty(n)
    d = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    if axis == 0:
        for j in range(ny):
            for k in range(nz):
                for i in range(nx):
                    f[i] = grid[i, j, k]
                _edt_1d(f, d, v, z)
                for i in range(nx):
                    grid[i, j, k] = d[i]
    elif axis == 1:
        for i in range(nx):
            for k in range(nz):
                for j in range(ny):
                    f[j] = grid[i, j, k]
                _edt_1d(f, d, v, z)
                for j in range(ny):
                    grid[i, j, k] = d[j]
    else:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    f[k] = grid[i, j, k]
                _edt_1d(f, d, v, z)
                for k in range(nz):
                    grid[i, j, k] = d[k]


def squared_edt(features: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance, in voxel units, from every voxel to
    the nearest ``True`` voxel. Values are integers held in float64; voxels
    with no feature in the grid get a value >= 1e20."""
    g = np.where(features, 0.0, _EDT_INF)
    for axis in range(3):
        _edt_axis(g, axis)
    return g


@dataclass
class Esdf:
    origin: np.ndarray
    resolution: float
    dist: np.ndarray  # float64, shape == dims
    sentinel: float = ESDF_SENTINEL

    @property
    def dims(self) -> tuple:
        return self.dist.shape

    def query(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Trilinear distance and its analytic gradient at ``points`` (n, 3).

        Points outside the span of voxel centers are clamped onto it; the
        third return value flags which ones were.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(np.isfinite(p)):
            raise ValueError("ESDF query point is not finite")
        dims = np.asarray(self.dims)
        u = (p - self.origin) / self.resolution - 0.5
        uc = np.clip(u, 0.0, dims - 1.0)
        clamped = np.any(uc != u, axis=1)
        base = np.minimum(np.floor(uc).astype(np.int64), np.maximum(dims - 2, 0))
        frac = uc - base
        val, grad = _trilinear(self.dist, base, frac)
        # at interior nodes the interpolant has a kink; use the mean of both
        # one-sided slopes, i.e. the central difference across the node
        for a in range(3):
            node = (frac[:, a] == 0.0) & (base[:, a] >= 1)
            if np.any(node):
                b2 = base[node].copy()
                f2 = frac[node].copy()
                b2[:, a] -= 1
                f2[:, a] = 1.0
                _, g_left = _trilinear(self.dist, b2, f2)
                grad[node, a] = 0.5 * (grad[node, a] + g_left[:, a])
        return val, grad / self.resolution, clamped

    def distance(self, points) -> np.ndarray:
        return self.query(points)[0]

    def to_header(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "resolution": self.resolution,
            "dims": list(self.dims),
            "dtype": "float32-le",
            "order": "x-fastest",
            "sentinel": self.sentinel,
            "sign": "free voxels: +distance to nearest occupied center; "
            "occupied voxels: -(distance to nearest free center - resolution)",
        }

    def dump(self, path) -> None:
        """Write ``<path>`` (raw little-endian float32, x fastest) and
        ``<path>.json`` (header)."""
        path = Path(path)
        self.dist.astype("<f4").ravel(order="F").tofile(path)
        path.with_name(path.name + ".json").write_text(json.dumps(self.to_header(), indent=2))

    @classmethod
    def load(cls, path) -> "Esdf":
        path = Path(path)
        hdr = json.loads(path.with_name(path.name + ".json").read_text())
        raw = np.fromfile(path, dtype="<f4").astype(float)
        dist = raw.reshape(hdr["dims"], order="F")
        return cls(np.asarray(hdr["origin"]), hdr["resolution"], dist, hdr.get("sentinel", ESDF_SENTINEL))


def _trilinear(values, base, frac):
    nx, ny, nz = values.shape
    i0, j0, k0 = base[:, 0], base[:, 1], base[:, 2]
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    k1 = np.minimum(k0 + 1, nz - 1)
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    c000 = values[i0, j0, k0]
    c100 = values[i1, j0, k0]
    c010 = values[i0, j1, k0]
    c110 = values[i1, j1, k0]
    c001 = values[i0, j0, k1]
    c101 = values[i1, j0, k1]
    c011 = values[i0, j1, k1]
    c111 = values[i1, j1, k1]
    c00 = c000 + (c100 - c000) * fx
    c10 = c010 + (c110 - c010) * fx
    c01 = c001 + (c101 - c001) * fx
    c11 = c011 + (c111 - c011) * fx
    c0 = c00 + (c10 - c00) * fy
    c1 = c01 + (c11 - c01) * fy
    val = c0 + (c1 - c0) * fz

    dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy
    dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy
    gx = dx0 + (dx1 - dx0) * fz
    gy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz
    gz = c1 - c0
    return val, np.stack([gx, gy, gz], axis=1)


def compute_esdf(grid: OccupancyGrid, sentinel: float = ESDF_SENTINEL) -> Esdf:
    """Exact signed distance field of ``grid`` (see module docstring for the
    sign convention). A grid without obstacles maps to ``sentinel``
    everywhere; a grid without free space maps to ``-sentinel``."""
    occ = grid.occupied
    res = grid.resolution
    dist = np.empty(occ.shape)
    if occ.any():
        dist_free = np.sqrt(squared_edt(occ)) * res
        dist[~occ] = dist_free[~occ]
    else:
        dist[:] = sentinel
    if occ.any():
        if (~occ).any():
            dist_in = np.sqrt(squared_edt(~occ)) * res
            dist[occ] = res - dist_in[occ]
        else:
            dist[occ] = -sentinel
    return Esdf(grid.origin.copy(), res, dist, sentinel)


def esdf_query(esdf: Esdf, point) -> tuple[float, np.ndarray, bool]:
    """Single-point form of :meth:`Esdf.query`: ``(distance, gradient, clamped)``."""
    d, g, c = esdf.query(np.asarray(point, dtype=float).reshape(1, 3))
    return float(d[0]), g[0], bool(c[0])


def inflate(grid: OccupancyGrid, esdf: Esdf, radius: float) -> OccupancyGrid:
    """Occupancy grid with every voxel within ``radius`` of an obstacle marked."""
    if radius <= 0:
        return grid
    return OccupancyGrid(grid.origin.copy(), grid.resolution, grid.occupied | (esdf.dist <= radius + 1e-9))


@dataclass
class MapSpec:
    """A map file: obstacle primitives plus the grid geometry to rasterize them on."""

    obstacles: ObstacleSet
    origin: np.ndarray
    dims: tuple
    resolution: float = DEFAULT_RESOLUTION
    start: np.ndarray | None = None
    goal: np.ndarray | None = None

    def build(self) -> tuple[OccupancyGrid, Esdf]:
        grid = grid_from_obstacles(self.obstacles, self.origin, self.dims, self.resolution)
        return grid, compute_esdf(grid)

    def to_dict(self) -> dict:
        d = {
            "origin": np.asarray(self.origin, dtype=float).tolist(),
            "dims": [int(x) for x in self.dims],
            "resolution": self.resolution,
            "obstacles": self.obstacles.to_dict(),
        }
        if self.start is not None:
            d["start"] = np.asarray(self.start, dtype=float).tolist()
        if self.goal is not None:
            d["goal"] = np.asarray(self.goal, dtype=float).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MapSpec":
        start = d.get("start")
        goal = d.get("goal")
        return cls(
            ObstacleSet.from_dict(d.get("obstacles", {})),
            np.asarray(d["origin"], dtype=float),
            tuple(d["dims"]),
            float(d.get("resolution", DEFAULT_RESOLUTION)),
            None if start is None else np.asarray(start, dtype=float),
            None if goal is None else np.asarray(goal, dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "MapSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def map_bounds_dims(size, resolution: float = DEFAULT_RESOLUTION) -> tuple:
    return tuple(int(math.ceil(s / resolution - 1e-9)) for s in size)
