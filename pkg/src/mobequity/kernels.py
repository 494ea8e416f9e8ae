"""Hot numeric kernels, each with a numba-compiled and a pure-numpy twin.

Every kernel below exists in two functionally equivalent versions: a
scalar-loop implementation compiled with ``numba.njit`` and a vectorized
numpy fallback. The active set is chosen once at import time: the numba
path is used when numba is importable and the environment variable
``MOBEQUITY_NUMBA`` is not set to ``0``/``false``/``off``/``no``.
``benchmarks/bench_kernels.py`` times the two paths against each other
and checks that they agree.

Distances are great-circle distances on a sphere of radius 6,371,000 m.
"""

from __future__ import annotations

import math
import os

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
_DEG = math.pi / 180.0


def _numba_requested() -> bool:
    value = os.environ.get("MOBEQUITY_NUMBA", "").strip().lower()
    return value not in ("0", "false", "off", "no")


try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - CI always has numba; flag covers the fallback
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _haversine_m_np(lat1, lon1, lat2, lon2):
    sphi = math.sin((lat2 - lat1) * (0.5 * _DEG))
    slam = math.sin((lon2 - lon1) * (0.5 * _DEG))
    a = sphi * sphi + math.cos(lat1 * _DEG) * math.cos(lat2 * _DEG) * slam * slam
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def _haversine_to_point_np(lats, lons, lat0, lon0):
    sphi = np.sin((lats - lat0) * (0.5 * _DEG))
    slam = np.sin((lons - lon0) * (0.5 * _DEG))
    a = sphi * sphi + np.cos(lats * _DEG) * math.cos(lat0 * _DEG) * slam * slam
    np.clip(a, 0.0, 1.0, out=a)
    return (2.0 * EARTH_RADIUS_M) * np.arcsin(np.sqrt(a))


def _pairwise_distances_np(lats, lons):
    # difference in degrees before converting: subtracting rounded radians
    # costs ~1e-9 m at metro-scale separations
    sphi = np.sin((lats[:, None] - lats[None, :]) * (0.5 * _DEG))
    slam = np.sin((lons[:, None] - lons[None, :]) * (0.5 * _DEG))
    cphi = np.cos(lats * _DEG)
    a = sphi * sphi + (cphi[:, None] * cphi[None, :]) * slam * slam
    np.clip(a, 0.0, 1.0, out=a)
    return (2.0 * EARTH_RADIUS_M) * np.arcsin(np.sqrt(a))


def _staypoint_spans_np(lats, lons, ts, max_distance_m, min_duration_s):
    # Anchor sweep: extend j from anchor i while the ping stays within
    # max_distance_m of the *anchor* ping; emit [i, j-1] when the dwell
    # reaches min_duration_s, then restart the anchor at the first
    # excluded ping. Distances are evaluated in blocks so a long dwell
    # does not scan the whole tail.
    n = int(lats.shape[0])
    starts: list[int] = []
    ends: list[int] = []
    block = 256
    i = 0
    while i < n - 1:
        j_excl = n
        j = i + 1
        while j < n:
            hi = min(j + block, n)
            d = _haversine_to_point_np(lats[j:hi], lons[j:hi], lats[i], lons[i])
            beyond = np.nonzero(d > max_distance_m)[0]
            if beyond.size:
                j_excl = j + int(beyond[0])
                break
            j = hi
        last = j_excl - 1
        if last > i and ts[last] - ts[i] >= min_duration_s:
            starts.append(i)
            ends.append(last)
            i = j_excl
        else:
            i += 1
    out = np.empty((len(starts), 2), dtype=np.int64)
    if starts:
        out[:, 0] = starts
        out[:, 1] = ends
    return out


def _complete_linkage_labels_np(dmat, max_diameter):
    # Greedy agglomeration on a full symmetric linkage matrix. np.argmin
    # returns the first (row-major) occurrence of the minimum, which for a
    # symmetric matrix is always an upper-triangle entry, so ties resolve
    # to the lexicographically smallest (i, j) pair. Merging j into i keeps
    # each cluster's representative equal to its smallest member index.
    n = int(dmat.shape[0])
    parent = np.arange(n, dtype=np.int64)
    if n < 2:
        return parent
    L = np.array(dmat, dtype=np.float64, copy=True)
    np.fill_diagonal(L, np.inf)
    for _ in range(n - 1):
        flat = int(np.argmin(L))
        i, j = divmod(flat, n)
        if not L[i, j] <= max_diameter:
            break
        merged = np.maximum(L[i], L[j])
        L[i] = merged
        L[:, i] = merged
        L[i, i] = np.inf
        L[j] = np.inf
        L[:, j] = np.inf
        parent[parent == j] = i
    _, labels = np.unique(parent, return_inverse=True)
    return labels.astype(np.int64)


def _ring_hits_np(ring_lat, ring_lon, lat, lon):
    # 2 = exactly on an edge, 1 = strictly inside by ray-casting parity,
    # 0 = outside. The ring is closed (first vertex repeated last).
    y1 = ring_lat[:-1]
    y2 = ring_lat[1:]
    x1 = ring_lon[:-1]
    x2 = ring_lon[1:]
    cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
    on_edge = (
        (cross == 0.0)
        & (lon >= np.minimum(x1, x2))
        & (lon <= np.maximum(x1, x2))
        & (lat >= np.minimum(y1, y2))
        & (lat <= np.maximum(y1, y2))
    )
    if bool(on_edge.any()):
        return 2
    straddle = (y1 > lat) != (y2 > lat)
    if not bool(straddle.any()):
        return 0
    xs = x1[straddle]
    ys = y1[straddle]
    xint = xs + (lat - ys) * (x2[straddle] - xs) / (y2[straddle] - ys)
    crossings = int(np.count_nonzero(lon < xint))
    return crossings & 1


# ---------------------------------------------------------------------------
# numba implementations (defined whenever numba is importable so the
# benchmark can compare both paths regardless of the dispatch flag)

if HAVE_NUMBA:

    @_njit(cache=True, nogil=True)
    def _haversine_m_jit(lat1, lon1, lat2, lon2):
        sphi = math.sin((lat2 - lat1) * (0.5 * _DEG))
        slam = math.sin((lon2 - lon1) * (0.5 * _DEG))
        a = sphi * sphi + math.cos(lat1 * _DEG) * math.cos(lat2 * _DEG) * slam * slam
        if a > 1.0:
            a = 1.0
        return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))

    @_njit(cache=True, nogil=True)
    def _haversine_to_point_jit(lats, lons, lat0, lon0):
        n = lats.shape[0]
        out = np.empty(n, dtype=np.float64)
        for k in range(n):
            out[k] = _haversine_m_jit(lats[k], lons[k], lat0, lon0)
        return out

    @_njit(cache=True, nogil=True)
    def _pairwise_distances_jit(lats, lons):
        n = lats.shape[0]
        out = np.zeros((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(i + 1, n):
                d = _haversine_m_jit(lats[i], lons[i], lats[j], lons[j])
                out[i, j] = d
                out[j, i] = d
        return out

    @_njit(cache=True, nogil=True)
    def _staypoint_spans_jit(lats, lons, ts, max_distance_m, min_duration_s):
        n = lats.shape[0]
        buf = np.empty((n, 2), dtype=np.int64)
        k = 0
        i = 0
        while i < n - 1:
            j = i + 1
            while j < n:
                if _haversine_m_jit(lats[i], lons[i], lats[j], lons[j]) > max_distance_m:
                    break
                j += 1
            last = j - 1
            if last > i and ts[last] - ts[i] >= min_duration_s:
                buf[k, 0] = i
                buf[k, 1] = last
                k += 1
                i = j
            else:
                i += 1
        return buf[:k].copy()

    @_njit(cache=True, nogil=True)
    def _complete_linkage_labels_jit(dmat, max_diameter):
        n = dmat.shape[0]
        parent = np.arange(n)
        if n < 2:
            return parent
        L = dmat.copy()
        for i in range(n):
            L[i, i] = np.inf
        for _ in range(n - 1):
            best = np.inf
            bi = -1
            bj = -1
            for i in range(n):
                for j in range(i + 1, n):
                    if L[i, j] < best:
                        best = L[i, j]
                        bi = i
                        bj = j
            if bi < 0 or best > max_diameter:
                break
            for k in range(n):
                m = max(L[bi, k], L[bj, k])
                L[bi, k] = m
                L[k, bi] = m
            L[bi, bi] = np.inf
            for k in range(n):
                L[bj, k] = np.inf
                L[k, bj] = np.inf
            for k in range(n):
                if parent[k] == bj:
                    parent[k] = bi
        labels = np.empty(n, dtype=np.int64)
        seen = np.full(n, -1, dtype=np.int64)
        next_label = 0
        for k in range(n):
            rep = parent[k]
            if seen[rep] < 0:
                seen[rep] = next_label
                next_label += 1
            labels[k] = seen[rep]
        return labels

    @_njit(cache=True, nogil=True)
    def _ring_hits_jit(ring_lat, ring_lon, lat, lon):
        m = ring_lat.shape[0] - 1
        crossings = 0
        for e in range(m):
            y1 = ring_lat[e]
            y2 = ring_lat[e + 1]
            x1 = ring_lon[e]
            x2 = ring_lon[e + 1]
            cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
            if cross == 0.0:
                if (
                    min(x1, x2) <= lon <= max(x1, x2)
                    and min(y1, y2) <= lat <= max(y1, y2)
                ):
                    return 2
            if (y1 > lat) != (y2 > lat):
                xint = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
                if lon < xint:
                    crossings += 1
        return crossings & 1


_NUMPY_IMPL = {
    "haversine_m": _haversine_m_np,
    "haversine_to_point": _haversine_to_point_np,
    "pairwise_distances": _pairwise_distances_np,
    "staypoint_spans": _staypoint_spans_np,
    "complete_linkage_labels": _complete_linkage_labels_np,
    "ring_hits": _ring_hits_np,
}

_NUMBA_IMPL = (
    {
        "haversine_m": _haversine_m_jit,
        "haversine_to_point": _haversine_to_point_jit,
        "pairwise_distances": _pairwise_distances_jit,
        "staypoint_spans": _staypoint_spans_jit,
        "complete_linkage_labels": _complete_linkage_labels_jit,
        "ring_hits": _ring_hits_jit,
    }
    if HAVE_NUMBA
    else None
)

_ACTIVE = _NUMBA_IMPL if NUMBA_ENABLED else _NUMPY_IMPL

haversine_m = _ACTIVE["haversine_m"]
haversine_to_point = _ACTIVE["haversine_to_point"]
pairwise_distances = _ACTIVE["pairwise_distances"]
staypoint_spans = _ACTIVE["staypoint_spans"]
complete_linkage_labels = _ACTIVE["complete_linkage_labels"]
ring_hits = _ACTIVE["ring_hits"]


def implementations():
    """Return {"numpy": {...}, "numba": {...} | None} for benchmarks/tests."""
    return {"numpy": _NUMPY_IMPL, "numba": _NUMBA_IMPL}


def warmup():
    """Trigger JIT compilation of the active kernel set on tiny inputs."""
    lats = np.array([0.0, 1e-4, 2e-4])
    lons = np.array([0.0, 1e-4, 2e-4])
    ts = np.array([0.0, 600.0, 1200.0])
    ring_lat = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    ring_lon = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
    haversine_m(0.0, 0.0, 1.0, 1.0)
    haversine_to_point(lats, lons, 0.0, 0.0)
    dmat = pairwise_distances(lats, lons)
    staypoint_spans(lats, lons, ts, 50.0, 900.0)
    complete_linkage_labels(dmat, 50.0)
    ring_hits(ring_lat, ring_lon, 0.5, 0.5)
