"""Weekly home block-group inference.

For each device and calendar week, the Monday-Thursday nighttime stay
points are clustered with complete linkage (so no cluster's diameter can
exceed the 50 m cap), each required night picks the cluster with the
largest nighttime dwell, and the device is assigned a home only when all
four nights agree on one block group. Failures carry a reason so reject
counts can be reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .geo import EmptyInputError, GeoPoint, GridIndex, locate
from .staypoints import StayPoint
from .timeutil import StudyWindow

DEFAULT_MAX_DIAMETER_M = 50.0
REQUIRED_WEEKDAYS = (0, 1, 2, 3)  # Monday .. Thursday

REJECT_MISSING_DAY = "missing_day"
REJECT_INCONSISTENT = "inconsistent_block_group"
REJECT_UNLOCATABLE = "unlocatable_centroid"


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    lat: float
    lon: float
    diameter_m: float


@dataclass(frozen=True)
class HomeAssignment:
    device_id: str
    week: int
    block_group_id: str
    # weekday offset (0=Mon) -> (cluster id, nighttime dwell seconds)
    per_day_evidence: dict[int, tuple[int, int]]


@dataclass(frozen=True)
class HomeRejection:
    device_id: str
    week: int
    reason: str


def complete_linkage_cluster(
    points: Union[Sequence[GeoPoint], np.ndarray],
    max_diameter_m: float = DEFAULT_MAX_DIAMETER_M,
) -> list[Cluster]:
    """Agglomerate points with complete linkage until the cap is hit.

    Merge ties resolve to the smallest (i, j) pair of cluster indices,
    clusters being ordered by their smallest member index. Every returned
    cluster has max pairwise distance <= max_diameter_m.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInputError("no points to cluster")
    pts = pts.reshape(-1, 2)
    lats = np.ascontiguousarray(pts[:, 0])
    lons = np.ascontiguousarray(pts[:, 1])
    dmat = kernels.pairwise_distances(lats, lons)
    labels = kernels.complete_linkage_labels(dmat, float(max_diameter_m))
    clusters = []
    for label in range(int(labels.max()) + 1):
        members = np.nonzero(labels == label)[0]
        diameter = float(dmat[np.ix_(members, members)].max()) if members.size > 1 else 0.0
        clusters.append(
            Cluster(
                members=tuple(int(m) for m in members),
                lat=float(lats[members].mean()),
                lon=float(lons[members].mean()),
                diameter_m=diameter,
            )
        )
    return clusters


def nightly_dwell(
    intervals_rel: Sequence[tuple[int, int]],
    labels: Sequence[int],
    window_rel: tuple[int, int],
) -> dict[int, int]:
    """Seconds of overlap with one night window, accumulated per cluster."""
    lo, hi = window_rel
    dwell: dict[int, int] = {}
    for (s, e), label in zip(intervals_rel, labels):
        overlap = min(e, hi) - max(s, lo)
        if overlap > 0:
            dwell[label] = dwell.get(label, 0) + int(overlap)
    return dwell


def assign_week_home(
    staypoints: Sequence[StayPoint],
    week: int,
    window: StudyWindow,
    index: GridIndex,
    *,
    max_diameter_m: float = DEFAULT_MAX_DIAMETER_M,
    night_start_hour: int = 21,
    night_end_hour: int = 6,
) -> Union[HomeAssignment, HomeRejection]:
    """Home assignment for one device-week, or a categorized rejection.

    ``staypoints`` may span the whole study; only stay points overlapping
    the week's Monday-Thursday night windows participate. The per-day
    winner is the cluster with the most nighttime dwell (ties: larger
    total ping count, then smaller cluster id).
    """
    device_id = staypoints[0].device_id if staypoints else ""
    day0 = (week - 1) * 7
    windows = [
        window.night_window_rel(day0 + wd, night_start_hour, night_end_hour)
        for wd in REQUIRED_WEEKDAYS
    ]
    intervals = []
    night_sps = []
    for sp in staypoints:
        s = window.rel(sp.t_start)
        e = window.rel(sp.t_end)
        if any(s < hi and e > lo for lo, hi in windows):
            intervals.append((s, e))
            night_sps.append(sp)
    if not night_sps:
        return HomeRejection(device_id, week, REJECT_MISSING_DAY)

    pts = np.array([[sp.lat, sp.lon] for sp in night_sps], dtype=np.float64)
    clusters = complete_linkage_cluster(pts, max_diameter_m)
    labels = np.empty(len(night_sps), dtype=np.int64)
    for cid, cluster in enumerate(clusters):
        labels[list(cluster.members)] = cid
    cluster_pings = [
        sum(night_sps[m].n_pings for m in cluster.members) for cluster in clusters
    ]

    evidence: dict[int, tuple[int, int]] = {}
    for wd, win in zip(REQUIRED_WEEKDAYS, windows):
        dwell = nightly_dwell(intervals, labels, win)
        if not dwell:
            return HomeRejection(device_id, week, REJECT_MISSING_DAY)
        winner = min(dwell, key=lambda cid: (-dwell[cid], -cluster_pings[cid], cid))
        evidence[wd] = (winner, dwell[winner])

    homes = set()
    for wd, (cid, _) in evidence.items():
        bg = locate(index, GeoPoint(clusters[cid].lat, clusters[cid].lon))
        if bg is None:
            return HomeRejection(device_id, week, REJECT_UNLOCATABLE)
        homes.add(bg)
    if len(homes) != 1:
        return HomeRejection(device_id, week, REJECT_INCONSISTENT)
    return HomeAssignment(device_id, week, homes.pop(), evidence)


def weekly_home_counts(assignments: Sequence[HomeAssignment]) -> dict[str, int]:
    """Distinct devices homed per block group (one assignment per device)."""
    counts: dict[str, int] = {}
    for a in assignments:
        counts[a.block_group_id] = counts.get(a.block_group_id, 0) + 1
    return counts
