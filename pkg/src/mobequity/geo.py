"""Geodesic distance, polygon containment, and a grid spatial index.

Geometry lives in plain lat/lon degrees. Containment is a ray-casting
parity test in the lon/lat plane; points exactly on an edge count as
contained. The grid index buckets polygons by the cells their bounding
box overlaps, so a lookup never misses a containing polygon; overlapping
polygons resolve to the lexicographically smallest id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import kernels


class GeoPoint(NamedTuple):
    lat: float
    lon: float


class EmptyInputError(ValueError):
    pass


class MalformedWKTError(ValueError):
    pass


def valid_lat_lon(lat: float, lon: float) -> bool:
    return (
        math.isfinite(lat)
        and math.isfinite(lon)
        and -90.0 <= lat <= 90.0
        and -180.0 <= lon <= 180.0
    )


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (sphere, R = 6,371,000 m)."""
    return float(kernels.haversine_m(a.lat, a.lon, b.lat, b.lon))


@dataclass(frozen=True)
class Polygon:
    """A closed exterior ring plus optional holes, as (k, 2) lat/lon arrays."""

    exterior: np.ndarray
    holes: tuple[np.ndarray, ...] = ()

    def bbox(self) -> tuple[float, float, float, float]:
        lat_min = float(self.exterior[:, 0].min())
        lat_max = float(self.exterior[:, 0].max())
        lon_min = float(self.exterior[:, 1].min())
        lon_max = float(self.exterior[:, 1].max())
        return lat_min, lat_max, lon_min, lon_max


def _check_ring(ring: np.ndarray) -> np.ndarray:
    ring = np.asarray(ring, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
        raise MalformedWKTError("ring needs at least 4 lat/lon vertices")
    if ring[0, 0] != ring[-1, 0] or ring[0, 1] != ring[-1, 1]:
        raise MalformedWKTError("ring is not closed (first vertex != last)")
    return ring


def make_polygon(exterior, holes=()) -> Polygon:
    return Polygon(_check_ring(exterior), tuple(_check_ring(h) for h in holes))


def polygon_contains(poly: Polygon, pt: GeoPoint) -> bool:
    """Boundary-inclusive containment; a point inside a hole is excluded."""
    hit = kernels.ring_hits(poly.exterior[:, 0], poly.exterior[:, 1], pt.lat, pt.lon)
    if hit == 2:
        return True
    if hit == 0:
        return False
    for hole in poly.holes:
        hhit = kernels.ring_hits(hole[:, 0], hole[:, 1], pt.lat, pt.lon)
        if hhit == 2:
            return True
        if hhit == 1:
            return False
    return True


def geometry_contains(parts: Sequence[Polygon], pt: GeoPoint) -> bool:
    return any(polygon_contains(part, pt) for part in parts)


# ---------------------------------------------------------------------------
# WKT (POLYGON / MULTIPOLYGON subset)


def _split_top_level(body: str) -> list[str]:
    parts = []
    depth = 0
    start = 0
    for k, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise MalformedWKTError("unbalanced parentheses")
        elif ch == "," and depth == 0:
            parts.append(body[start:k])
            start = k + 1
    if depth != 0:
        raise MalformedWKTError("unbalanced parentheses")
    parts.append(body[start:])
    return parts


def _strip_parens(text: str) -> str:
    s = text.strip()
    if not s.startswith("(") or not s.endswith(")"):
        raise MalformedWKTError(f"expected parenthesized group, got {s[:40]!r}")
    return s[1:-1]


def _parse_ring(text: str) -> np.ndarray:
    pts = []
    for token in text.strip().split(","):
        fields = token.split()
        if len(fields) != 2:
            raise MalformedWKTError(f"bad coordinate pair {token.strip()!r}")
        try:
            lon = float(fields[0])
            lat = float(fields[1])
        except ValueError as exc:
            raise MalformedWKTError(f"non-numeric coordinate in {token.strip()!r}") from exc
        if not valid_lat_lon(lat, lon):
            raise MalformedWKTError(f"coordinate out of range in {token.strip()!r}")
        pts.append((lat, lon))
    return _check_ring(np.array(pts, dtype=np.float64))


def _parse_polygon_body(body: str) -> Polygon:
    rings = [_parse_ring(_strip_parens(part)) for part in _split_top_level(body)]
    if not rings:
        raise MalformedWKTError("polygon has no rings")
    return Polygon(rings[0], tuple(rings[1:]))


def parse_wkt(text: str) -> tuple[Polygon, ...]:
    """Parse a WKT POLYGON or MULTIPOLYGON into geometry parts.

    WKT coordinate order is ``lon lat``; the returned rings are (lat, lon).
    """
    s = text.strip()
    upper = s.upper()
    if upper.startswith("MULTIPOLYGON"):
        body = _strip_parens(s[len("MULTIPOLYGON"):])
        return tuple(
            _parse_polygon_body(_strip_parens(part)) for part in _split_top_level(body)
        )
    if upper.startswith("POLYGON"):
        body = _strip_parens(s[len("POLYGON"):])
        return (_parse_polygon_body(body),)
    raise MalformedWKTError(f"unsupported WKT type: {s[:30]!r}")


# ---------------------------------------------------------------------------
# grid index


@dataclass(frozen=True)
class _Entry:
    group_id: str
    parts: tuple[Polygon, ...]
    bbox: tuple[float, float, float, float]


@dataclass
class GridIndex:
    """Cell -> candidate polygons; immutable once built, safe to share."""

    cell_deg: float
    lat0: float
    lon0: float
    lat1: float
    lon1: float
    cells: dict[tuple[int, int], list[int]]
    entries: list[_Entry]

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        return (
            int(math.floor((lat - self.lat0) / self.cell_deg)),
            int(math.floor((lon - self.lon0) / self.cell_deg)),
        )


def _geometry_bbox(parts: Sequence[Polygon]) -> tuple[float, float, float, float]:
    boxes = [p.bbox() for p in parts]
    return (
        min(b[0] for b in boxes),
        max(b[1] for b in boxes),
        min(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )


def build_index(
    block_groups: Sequence[tuple[str, Sequence[Polygon]]], cell_deg: float = 0.01
) -> GridIndex:
    """Index geometries by grid cell; candidates are kept in id order."""
    if not block_groups:
        raise EmptyInputError("no block groups to index")
    if cell_deg <= 0:
        raise ValueError("cell_deg must be positive")
    entries = sorted(
        (
            _Entry(gid, tuple(parts), _geometry_bbox(parts))
            for gid, parts in block_groups
        ),
        key=lambda e: e.group_id,
    )
    lat0 = min(e.bbox[0] for e in entries)
    lat1 = max(e.bbox[1] for e in entries)
    lon0 = min(e.bbox[2] for e in entries)
    lon1 = max(e.bbox[3] for e in entries)
    cells: dict[tuple[int, int], list[int]] = {}
    for idx, entry in enumerate(entries):
        blat0, blat1, blon0, blon1 = entry.bbox
        i0 = int(math.floor((blat0 - lat0) / cell_deg))
        i1 = int(math.floor((blat1 - lat0) / cell_deg))
        j0 = int(math.floor((blon0 - lon0) / cell_deg))
        j1 = int(math.floor((blon1 - lon0) / cell_deg))
        for ci in range(i0, i1 + 1):
            for cj in range(j0, j1 + 1):
                cells.setdefault((ci, cj), []).append(idx)
    return GridIndex(cell_deg, lat0, lon0, lat1, lon1, cells, entries)


def locate(index: GridIndex, pt: GeoPoint) -> Optional[str]:
    """Id of a containing block group, or None.

    Candidates are scanned in ascending id order, so overlapping polygons
    deterministically resolve to the smallest id.
    """
    if not (index.lat0 <= pt.lat <= index.lat1 and index.lon0 <= pt.lon <= index.lon1):
        return None
    for idx in index.cells.get(index.cell_of(pt.lat, pt.lon), ()):
        entry = index.entries[idx]
        blat0, blat1, blon0, blon1 = entry.bbox
        if not (blat0 <= pt.lat <= blat1 and blon0 <= pt.lon <= blon1):
            continue
        if geometry_contains(entry.parts, pt):
            return entry.group_id
    return None
