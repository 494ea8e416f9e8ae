"""Independent reference implementations used as test oracles.

Everything here is deliberately naive and built on the math module only,
so it shares no code path with the package kernels.
"""

from __future__ import annotations

import itertools
import math

EARTH_RADIUS_M = 6_371_000.0


def haversine(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def staypoint_windows(lats, lons, ts, max_distance_m, min_duration_s):
    """Enumerate every maximal anchor window by full scan, then apply the
    documented selection: emit a qualifying window and restart the anchor
    at the first excluded ping; otherwise advance the anchor by one."""
    n = len(ts)
    maximal = {}
    for i in range(n):
        j_excl = n
        for j in range(i + 1, n):
            if haversine(lats[i], lons[i], lats[j], lons[j]) > max_distance_m:
                j_excl = j
                break
        maximal[i] = j_excl
    out = []
    i = 0
    while i < n:
        j_excl = maximal[i]
        last = j_excl - 1
        if last > i and ts[last] - ts[i] >= min_duration_s:
            out.append((i, last))
            i = j_excl
        else:
            i += 1
    return out


def winding_number_contains(ring, lat, lon):
    """Nonzero winding number test in the lon/lat plane (edge-exclusive)."""
    wn = 0
    for (y1, x1), (y2, x2) in zip(ring[:-1], ring[1:]):
        if y1 <= lat:
            if y2 > lat and (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1) > 0:
                wn += 1
        elif y2 <= lat and (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1) < 0:
            wn -= 1
    return wn != 0


def on_ring_edge(ring, lat, lon):
    for (y1, x1), (y2, x2) in zip(ring[:-1], ring[1:]):
        cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
        if cross == 0 and min(x1, x2) <= lon <= max(x1, x2) and min(y1, y2) <= lat <= max(y1, y2):
            return True
    return False


def polygon_contains(exterior, holes, lat, lon):
    if on_ring_edge(exterior, lat, lon):
        return True
    if not winding_number_contains(exterior, lat, lon):
        return False
    for hole in holes:
        if on_ring_edge(hole, lat, lon):
            return True
        if winding_number_contains(hole, lat, lon):
            return False
    return True


def complete_linkage(points, max_diameter_m):
    """Direct-definition complete-linkage agglomeration.

    Clusters are kept ordered by smallest member index; the linkage
    distance between clusters is recomputed as the max over member pairs
    on every step; ties pick the smallest (i, j) position pair.
    """
    n = len(points)
    dist = [
        [haversine(points[i][0], points[i][1], points[j][0], points[j][1]) for j in range(n)]
        for i in range(n)
    ]
    clusters = [[i] for i in range(n)]
    while len(clusters) > 1:
        best = math.inf
        bi = bj = -1
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                linkage = max(dist[a][b] for a in clusters[i] for b in clusters[j])
                if linkage < best:
                    best = linkage
                    bi, bj = i, j
        if best > max_diameter_m:
            break
        clusters[bi] = clusters[bi] + clusters[bj]
        del clusters[bj]
        clusters.sort(key=min)
    return [sorted(c) for c in clusters]


def min_valid_partition_size(points, max_diameter_m, upto=8):
    """Smallest number of diameter-bounded blocks over all set partitions."""
    n = len(points)
    assert n <= upto
    dist = [
        [haversine(points[i][0], points[i][1], points[j][0], points[j][1]) for j in range(n)]
        for i in range(n)
    ]

    def ok(block):
        return all(dist[a][b] <= max_diameter_m for a, b in itertools.combinations(block, 2))

    best = n
    # enumerate partitions via restricted growth strings
    codes = [0] * n

    def rec(i, k):
        nonlocal best
        if i == n:
            blocks = {}
            for idx, c in enumerate(codes):
                blocks.setdefault(c, []).append(idx)
            if all(ok(b) for b in blocks.values()):
                best = min(best, len(blocks))
            return
        for c in range(k + 1):
            codes[i] = c
            rec(i + 1, max(k, c + 1))

    rec(0, 0)
    return best
