"""Per-device and per-block-group equity measures.

Three measures per the pipeline's reporting contract: representativeness
(identified devices over census population), quantity (distinct stay-point
clock hours per day, and weekly stay-point counts), and precision (median
reported accuracy radius). Plus the census correlation series and
equal-frequency quantile binning for choropleth exports.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import stats
from .ingest import BlockGroup
from .staypoints import StayPoint
from .timeutil import SECONDS_PER_DAY, SECONDS_PER_HOUR, SECONDS_PER_WEEK, StudyWindow


class ZeroPopulationError(ValueError):
    pass


class NoPingsError(ValueError):
    pass


class InsufficientUnitsError(ValueError):
    pass


def representativeness(x: int, population: int) -> float:
    """Identified devices over census population for one block group."""
    if population <= 0:
        raise ZeroPopulationError("block group has zero population")
    return x / population


def class_representativeness(
    counts: Mapping[str, int],
    block_groups: Sequence[BlockGroup],
    *,
    partition: str,
) -> dict[str, np.ndarray]:
    """Per-class distributions of p over that class's block groups.

    ``partition`` is "race" or "poverty". Zero-population block groups are
    excluded (no denominator); block groups with no homed devices
    contribute p = 0.
    """
    values: dict[str, list[float]] = {}
    for bg in block_groups:
        if bg.classification is None or bg.population <= 0:
            continue
        label = (
            bg.classification.race.value
            if partition == "race"
            else bg.classification.poverty.value
        )
        values.setdefault(label, []).append(
            representativeness(counts.get(bg.id, 0), bg.population)
        )
    return {label: np.array(vals, dtype=np.float64) for label, vals in values.items()}


def device_week_quantity(
    staypoints: Sequence[StayPoint], week: int, window: StudyWindow
) -> tuple[float, int]:
    """(q_h, q_sp) for one device-week.

    A stay point belongs to the week containing its start. q_sp is the
    count of such stay points; q_h is the mean over the week's 7 days of
    the number of distinct local clock hours whose [h, h+1) slot
    intersects a stay-point interval, intervals being treated as
    half-open [t_start, t_end) and clipped to the week.
    """
    w_lo, w_hi = window.week_bounds_rel(week)
    q_sp = 0
    hour_mask = 0
    for sp in staypoints:
        s = window.rel(sp.t_start)
        if not w_lo <= s < w_hi:
            continue
        q_sp += 1
        e = min(window.rel(sp.t_end), w_hi)
        if e <= s:
            continue
        first = (s - w_lo) // SECONDS_PER_HOUR
        last = (e - 1 - w_lo) // SECONDS_PER_HOUR
        hour_mask |= ((1 << (last - first + 1)) - 1) << first
    q_h = hour_mask.bit_count() / 7.0
    return q_h, q_sp


def device_week_precision(precisions: Iterable[float]) -> float:
    """Lower-median of the device-week's reported precision values."""
    arr = np.asarray(list(precisions) if not isinstance(precisions, np.ndarray) else precisions)
    if arr.size == 0:
        raise NoPingsError("device-week has no pings")
    return stats.lower_median(arr)


def aggregate_to_tracts(
    values_by_bg: Mapping[str, float], block_groups: Sequence[BlockGroup]
) -> dict[str, float]:
    """Sum block-group values up to tracts (first 11 GEOID characters)."""
    out: dict[str, float] = {}
    for bg in block_groups:
        out[bg.tract_id] = out.get(bg.tract_id, 0) + values_by_bg.get(bg.id, 0)
    return out


def census_correlation(
    counts: Mapping[str, int],
    block_groups: Sequence[BlockGroup],
    *,
    level: str = "block_group",
) -> stats.TestResult:
    """Pearson r between homed-device counts and census population.

    ``level`` is "block_group" or "tract". Units with zero population are
    excluded; units with no homes contribute x = 0.
    """
    if level == "tract":
        xs = aggregate_to_tracts(dict(counts), block_groups)
        ns = aggregate_to_tracts({bg.id: bg.population for bg in block_groups}, block_groups)
        pairs = [(xs.get(tid, 0), n) for tid, n in sorted(ns.items()) if n > 0]
    elif level == "block_group":
        pairs = [
            (counts.get(bg.id, 0), bg.population)
            for bg in sorted(block_groups, key=lambda b: b.id)
            if bg.population > 0
        ]
    else:
        raise ValueError(f"unknown level {level!r}")
    if len(pairs) < 3:
        raise InsufficientUnitsError(f"{len(pairs)} units at level {level!r}, need >= 3")
    x = np.array([p[0] for p in pairs], dtype=np.float64)
    n = np.array([p[1] for p in pairs], dtype=np.float64)
    return stats.pearson(x, n)


def quantile_bins(values, k: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Equal-frequency bin edges and 1-based assignments.

    Edges are the j/k quantiles (linear interpolation). A value equal to
    an edge falls in the lower bin, so an all-equal input lands entirely
    in bin 1.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to bin")
    if k < 1:
        raise ValueError("k must be >= 1")
    edges = np.quantile(arr, np.arange(1, k) / k)
    bins = np.searchsorted(edges, arr, side="left") + 1
    return edges, bins.astype(np.int64)
