"""Stay-point extraction from time-sorted device ping streams.

A stay point is a maximal run of pings all within ``max_distance_m`` of
the anchor (first) ping whose dwell reaches ``min_duration_s``. The sweep
is anchor-based: when the run ends at the first excluded ping, a
qualifying window is emitted and the anchor restarts at that ping;
non-qualifying anchors advance by one. Emitted stay points are
time-ordered and never share pings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .geo import GeoPoint, GridIndex, locate
from .ingest import PingRecord

DEFAULT_MIN_DURATION_S = 900.0
DEFAULT_MAX_DISTANCE_M = 50.0


@dataclass(frozen=True)
class StayPoint:
    device_id: str
    lat: float
    lon: float
    t_start: int
    t_end: int
    n_pings: int
    median_precision_m: float


def detect_spans(
    lats: np.ndarray,
    lons: np.ndarray,
    ts: np.ndarray,
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    max_distance_m: float = DEFAULT_MAX_DISTANCE_M,
) -> np.ndarray:
    """Index spans [start, end] (inclusive) of stay points in sorted arrays."""
    if min_duration_s <= 0 or max_distance_m <= 0:
        raise ValueError("stay-point parameters must be positive")
    return kernels.staypoint_spans(
        np.ascontiguousarray(lats, dtype=np.float64),
        np.ascontiguousarray(lons, dtype=np.float64),
        np.ascontiguousarray(ts, dtype=np.float64),
        float(max_distance_m),
        float(min_duration_s),
    )


def _lower_median(values: np.ndarray) -> float:
    k = (values.size - 1) // 2
    return float(np.partition(values, k)[k])


def spans_to_staypoints(
    device_id: str,
    lats: np.ndarray,
    lons: np.ndarray,
    ts: np.ndarray,
    precisions: np.ndarray,
    spans: np.ndarray,
) -> list[StayPoint]:
    out = []
    for s, e in spans:
        sl = slice(int(s), int(e) + 1)
        out.append(
            StayPoint(
                device_id=device_id,
                lat=float(np.mean(lats[sl])),
                lon=float(np.mean(lons[sl])),
                t_start=int(ts[s]),
                t_end=int(ts[e]),
                n_pings=int(e - s + 1),
                median_precision_m=_lower_median(precisions[sl]),
            )
        )
    return out


def detect_stay_points(
    pings: Sequence[PingRecord],
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    max_distance_m: float = DEFAULT_MAX_DISTANCE_M,
) -> list[StayPoint]:
    """Extract stay points from one device's time-sorted ping list."""
    if not pings:
        return []
    lats = np.array([p.lat for p in pings], dtype=np.float64)
    lons = np.array([p.lon for p in pings], dtype=np.float64)
    ts = np.array([p.t for p in pings], dtype=np.float64)
    precs = np.array([p.precision_m for p in pings], dtype=np.float64)
    spans = detect_spans(lats, lons, ts, min_duration_s, max_distance_m)
    return spans_to_staypoints(pings[0].device_id, lats, lons, ts, precs, spans)


def staypoint_block_group(sp: StayPoint, index: GridIndex) -> Optional[str]:
    """Block group containing the stay-point centroid, or None."""
    return locate(index, GeoPoint(sp.lat, sp.lon))
