"""Planar multi-polygon regions for the capture-set search, backed by shapely.

Regions are immutable; every operation returns a new value. After each
boolean operation vertices are snapped to a 1e-12 LU grid and polygons with
area below ``h**2 / 100`` are discarded.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

SNAP = 1e-12
QUAD_SEGS = 8  # 32-gon disc


def _polygons(geom: BaseGeometry) -> list[Polygon]:
    if geom is None or geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    return [g for part in getattr(geom, "geoms", []) for g in _polygons(part)]


def _normalize(geom: BaseGeometry, min_area: float) -> MultiPolygon:
    geom = shapely.set_precision(geom, SNAP)
    polys = [p for p in _polygons(geom) if p.area >= min_area]
    if not polys:
        return MultiPolygon()
    return MultiPolygon([shapely.geometry.polygon.orient(p, 1.0) for p in polys])


@dataclass(frozen=True)
class PolyRegion:
    """Multi-polygon with holes, tagged with the grid step used for sliver removal."""

    geom: MultiPolygon = field(default_factory=MultiPolygon)
    h: float = 0.0

    @classmethod
    def from_geometry(cls, geom: BaseGeometry, h: float) -> "PolyRegion":
        return cls(_normalize(geom, h * h / 100.0), h)

    @classmethod
    def empty(cls, h: float = 0.0) -> "PolyRegion":
        return cls(MultiPolygon(), h)

    @property
    def is_empty(self) -> bool:
        return self.geom.is_empty

    @property
    def area(self) -> float:
        return float(self.geom.area)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return tuple(self.geom.bounds) if not self.is_empty else (math.nan,) * 4

    def rings(self) -> list[tuple[int, bool, np.ndarray]]:
        """``(ring_id, is_hole, vertices)`` with the closing vertex dropped."""
        out = []
        rid = 0
        for poly in _polygons(self.geom):
            out.append((rid, False, np.asarray(poly.exterior.coords)[:-1]))
            rid += 1
            for hole in poly.interiors:
                out.append((rid, True, np.asarray(hole.coords)[:-1]))
                rid += 1
        return out

    def union(self, other: "PolyRegion") -> "PolyRegion":
        return PolyRegion.from_geometry(shapely.union(self.geom, other.geom), max(self.h, other.h))

    def intersection(self, other: "PolyRegion") -> "PolyRegion":
        return PolyRegion.from_geometry(shapely.intersection(self.geom, other.geom), max(self.h, other.h))

    def contains(self, x, y) -> np.ndarray:
        """Closed point-in-region test (boundary counts as inside)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_empty:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        shapely.prepare(self.geom)
        return shapely.intersects_xy(self.geom, x, y)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ring_id", "is_hole", "x_LU", "y_LU"])
            for rid, hole, verts in self.rings():
                for vx, vy in verts:
                    w.writerow([rid, int(hole), repr(float(vx)), repr(float(vy))])

    @classmethod
    def from_csv(cls, path, h: float) -> "PolyRegion":
        rings: dict[int, tuple[bool, list]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rid = int(row["ring_id"])
                hole = bool(int(row["is_hole"]))
                rings.setdefault(rid, (hole, []))[1].append((float(row["x_LU"]), float(row["y_LU"])))
        polys = []
        for rid in sorted(rings):
            hole, pts = rings[rid]
            if not hole:
                polys.append([pts, []])
            else:
                polys[-1][1].append(pts)
        geom = MultiPolygon([Polygon(ext, holes) for ext, holes in polys]) if polys else MultiPolygon()
        return cls(geom, h)


def region_from_points(points: Iterable, merge_radius: float) -> PolyRegion:
    """Union of axis-aligned square cells of side ``merge_radius`` centred on the points."""
    pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if pts.size == 0:
        return PolyRegion.empty(merge_radius)
    pts = pts.reshape(-1, 2)
    half = 0.5 * merge_radius
    cells = shapely.box(pts[:, 0] - half, pts[:, 1] - half, pts[:, 0] + half, pts[:, 1] + half)
    merged = shapely.union_all(cells)
    merged = shapely.simplify(merged, SNAP * 10, preserve_topology=True)
    return PolyRegion.from_geometry(merged, merge_radius)


def buffer(region: PolyRegion, d_o: float) -> PolyRegion:
    """Outward offset by ``d_o`` with round joins (disc approximated by a 32-gon)."""
    if d_o <= 0.0:
        raise ValueError("buffer distance must be positive")
    if region.is_empty:
        return region
    grown = shapely.buffer(region.geom, d_o, quad_segs=QUAD_SEGS, join_style="round")
    return PolyRegion.from_geometry(grown, region.h)


def boundary_vertices(region: PolyRegion) -> np.ndarray:
    """All ring vertices as rows ``(ring_id, is_hole, x, y)``; outer rings CCW, holes CW."""
    rows = [
        np.column_stack([np.full(len(v), rid), np.full(len(v), int(hole)), v])
        for rid, hole, v in region.rings()
    ]
    return np.vstack(rows) if rows else np.empty((0, 4))


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of step ``h`` centred on ``(xc, yc)`` spanning ``width x height``."""

    xc: float
    yc: float
    width: float
    height: float
    h: float

    def __post_init__(self):
        if self.h <= 0.0 or self.width <= 0.0 or self.height <= 0.0:
            raise ValueError("grid step and extents must be positive")

    @property
    def nx(self) -> int:
        return int(math.floor(0.5 * self.width / self.h + 1e-9))

    @property
    def ny(self) -> int:
        return int(math.floor(0.5 * self.height / self.h + 1e-9))

    def coords(self, ix, iy):
        return self.xc + np.asarray(ix) * self.h, self.yc + np.asarray(iy) * self.h

    def index_of(self, x, y):
        ix = np.rint((np.asarray(x) - self.xc) / self.h).astype(int)
        iy = np.rint((np.asarray(y) - self.yc) / self.h).astype(int)
        return ix, iy

    def all_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major (iy outer, ix inner) indices of every grid node."""
        iy, ix = np.meshgrid(np.arange(-self.ny, self.ny + 1), np.arange(-self.nx, self.nx + 1), indexing="ij")
        return ix.ravel(), iy.ravel()

    def box(self) -> PolyRegion:
        x0, y0 = self.coords(-self.nx, -self.ny)
        x1, y1 = self.coords(self.nx, self.ny)
        return PolyRegion(MultiPolygon([shapely.box(x0, y0, x1, y1)]), self.h)

    def coarsened(self, factor: int) -> "GridSpec":
        return GridSpec(self.xc, self.yc, self.width, self.height, self.h * factor)


def clip_grid(region: PolyRegion, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Integer indices ``(ix, iy)`` of grid nodes inside the region, row-major."""
    if region.is_empty:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    xmin, ymin, xmax, ymax = region.bounds
    ix0 = max(-grid.nx, int(math.floor((xmin - grid.xc) / grid.h)))
    ix1 = min(grid.nx, int(math.ceil((xmax - grid.xc) / grid.h)))
    iy0 = max(-grid.ny, int(math.floor((ymin - grid.yc) / grid.h)))
    iy1 = min(grid.ny, int(math.ceil((ymax - grid.yc) / grid.h)))
    if ix0 > ix1 or iy0 > iy1:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    iy, ix = np.meshgrid(np.arange(iy0, iy1 + 1), np.arange(ix0, ix1 + 1), indexing="ij")
    ix = ix.ravel()
    iy = iy.ravel()
    x, y = grid.coords(ix, iy)
    inside = region.contains(x, y)
    return ix[inside], iy[inside]


def intersects_boundary(points, region: PolyRegion, h: Optional[float] = None) -> bool:
    """True iff any point lies within ``h / 2`` of the region boundary."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0 or region.is_empty:
        return False
    h = region.h if h is None else h
    dist = shapely.distance(region.geom.boundary, shapely.points(pts))
    return bool(np.any(dist <= 0.5 * h))


__all__ = [
    "GridSpec",
    "PolyRegion",
    "boundary_vertices",
    "buffer",
    "clip_grid",
    "intersects_boundary",
    "region_from_points",
]
