"""Parse and validate ping and census block-group files.

Ping parsing is total: every input line either becomes a record or is
counted under a rejection reason; nothing is silently dropped. The
block-group file is reference data and parses strictly (malformed rows
raise). Neighborhood classification uses strict thresholds: a majority
race share must exceed 0.5 and a poor neighborhood has a poverty share
above 0.3.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .geo import MalformedWKTError, Polygon, parse_wkt

PING_HEADER = "device_id,lat,lon,t,precision_m"
BLOCK_GROUP_HEADER = [
    "id",
    "wkt",
    "pop_total",
    "pop_white",
    "pop_black",
    "pop_hispanic",
    "poverty_share",
]

REASON_FIELD_COUNT = "bad_field_count"
REASON_EMPTY_DEVICE = "empty_device_id"
REASON_BAD_NUMBER = "unparseable_number"
REASON_NONFINITE = "nonfinite_value"
REASON_LAT_RANGE = "lat_out_of_range"
REASON_LON_RANGE = "lon_out_of_range"
REASON_PRECISION = "nonpositive_precision"
REASON_WINDOW = "t_out_of_window"


class FileUnreadableError(OSError):
    pass


class MissingHeaderError(ValueError):
    pass


class MalformedRowError(ValueError):
    pass


class DuplicateIdError(ValueError):
    pass


class RaceClass(str, Enum):
    MAJORITY_WHITE = "majority_white"
    MAJORITY_BLACK = "majority_black"
    MAJORITY_HISPANIC = "majority_hispanic"
    NO_MAJORITY = "no_majority"


class PovertyClass(str, Enum):
    POOR = "poor"
    NONPOOR = "nonpoor"


@dataclass(frozen=True)
class NeighborhoodClass:
    race: RaceClass
    poverty: PovertyClass


@dataclass(frozen=True)
class PingRecord:
    device_id: str
    lat: float
    lon: float
    t: int
    precision_m: float


@dataclass(frozen=True)
class BlockGroup:
    id: str
    geometry: tuple[Polygon, ...]
    population: int
    n_white: int
    n_black: int
    n_hispanic: int
    poverty_share: float
    classification: Optional[NeighborhoodClass]

    @property
    def tract_id(self) -> str:
        return self.id[:11]


@dataclass
class RejectReport:
    counts: dict[str, int] = field(default_factory=dict)
    n_lines: int = 0
    n_accepted: int = 0

    def bump(self, reason: str) -> None:
        self.counts[reason] = self.counts.get(reason, 0) + 1

    @property
    def n_rejected(self) -> int:
        return sum(self.counts.values())

    def rows(self) -> list[tuple[str, int]]:
        return sorted(self.counts.items())


@dataclass
class PingColumns:
    """Columnar ping table in input order.

    Device ids are interned: ``device_table`` holds the distinct ids in
    first-appearance order and ``device_code`` indexes into it per ping.
    """

    device_table: np.ndarray
    device_code: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    t: np.ndarray
    precision_m: np.ndarray

    @property
    def device_id(self) -> np.ndarray:
        if len(self.device_table) == 0:
            return np.empty(0, dtype="U1")
        return self.device_table[self.device_code]

    def __len__(self) -> int:
        return int(self.t.shape[0])


def classify(
    population: int,
    n_white: int,
    n_black: int,
    n_hispanic: int,
    poverty_share: float,
    *,
    majority_threshold: float = 0.5,
    poverty_threshold: float = 0.3,
) -> Optional[NeighborhoodClass]:
    """Neighborhood class from strict "more than" thresholds; None if N = 0."""
    if population <= 0:
        return None
    shares = {
        RaceClass.MAJORITY_WHITE: n_white / population,
        RaceClass.MAJORITY_BLACK: n_black / population,
        RaceClass.MAJORITY_HISPANIC: n_hispanic / population,
    }
    race = RaceClass.NO_MAJORITY
    for cls, share in shares.items():
        if share > majority_threshold:
            race = cls
            break
    poverty = PovertyClass.POOR if poverty_share > poverty_threshold else PovertyClass.NONPOOR
    return NeighborhoodClass(race, poverty)


def _open_text(source: Union[str, "os.PathLike[str]", IO]) -> tuple[IO, bool]:
    if isinstance(source, (str, bytes, os.PathLike)):
        try:
            return open(source, "r", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise FileUnreadableError(f"cannot read {source!r}: {exc}") from exc
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _parse_pings_fast(path, t_min, t_max):
    """Vectorized parse of a structurally clean ping file.

    Returns None when the file has any malformed line (wrong field count,
    non-numeric value, oversized integer), in which case the caller falls
    back to the line-by-line parser that can account for every reject
    reason. Value-level rejections (ranges, precision, window) are
    vectorized here with the same priority order as the slow path.
    """
    try:
        import pandas as pd
    except ImportError:
        return None
    try:
        df = pd.read_csv(
            path,
            skiprows=1,
            header=None,
            names=["device_id", "lat", "lon", "t", "precision_m"],
            dtype={
                "device_id": str,
                "lat": np.float64,
                "lon": np.float64,
                "t": np.int64,
                "precision_m": np.float64,
            },
            engine="c",
            na_filter=False,
            skip_blank_lines=False,
            quoting=csv.QUOTE_NONE,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        df = pd.DataFrame(
            {
                "device_id": np.empty(0, dtype=object),
                "lat": np.empty(0),
                "lon": np.empty(0),
                "t": np.empty(0, dtype=np.int64),
                "precision_m": np.empty(0),
            }
        )
    except (ValueError, OverflowError, pd.errors.ParserError):
        return None
    dev = df["device_id"].to_numpy()
    lat = df["lat"].to_numpy()
    lon = df["lon"].to_numpy()
    ts = df["t"].to_numpy()
    prec = df["precision_m"].to_numpy()

    n = len(ts)
    report = RejectReport(n_lines=n)
    reasons = np.zeros(n, dtype=np.int8)
    order = [
        (REASON_EMPTY_DEVICE, dev == ""),
        (REASON_NONFINITE, ~(np.isfinite(lat) & np.isfinite(lon) & np.isfinite(prec))),
        (REASON_LAT_RANGE, (lat < -90.0) | (lat > 90.0)),
        (REASON_LON_RANGE, (lon < -180.0) | (lon > 180.0)),
        (REASON_PRECISION, prec <= 0.0),
    ]
    if t_min is not None or t_max is not None:
        w_lo = t_min if t_min is not None else -(1 << 62)
        w_hi = t_max if t_max is not None else (1 << 62)
        order.append((REASON_WINDOW, (ts < w_lo) | (ts >= w_hi)))
    for code, (reason, mask) in enumerate(order, start=1):
        claim = (reasons == 0) & mask
        count = int(np.count_nonzero(claim))
        if count:
            report.counts[reason] = count
            reasons[claim] = code
    ok = reasons == 0
    report.n_accepted = int(np.count_nonzero(ok))
    table, codes = np.unique(dev[ok], return_inverse=True)
    cols = PingColumns(
        table.astype("U") if len(table) else np.empty(0, dtype="U1"),
        codes.astype(np.int64),
        lat[ok],
        lon[ok],
        ts[ok],
        prec[ok],
    )
    return cols, report


def parse_pings_columnar(
    source: Union[str, IO],
    *,
    t_min: Optional[int] = None,
    t_max: Optional[int] = None,
) -> tuple[PingColumns, RejectReport]:
    """Stream-parse a ping CSV into columnar arrays plus a reject report.

    A zero-byte file parses to zero records; otherwise the exact header
    ``device_id,lat,lon,t,precision_m`` is required. Records keep input
    order. When a window is given, timestamps outside [t_min, t_max) are
    rejected with reason ``t_out_of_window``. Structurally clean files on
    disk take a vectorized fast path; anything malformed falls back to
    the total line-by-line parser.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "r", encoding="utf-8", newline="") as probe:
                header = probe.readline()
        except OSError as exc:
            raise FileUnreadableError(f"cannot read {source!r}: {exc}") from exc
        if header == "":
            return (
                PingColumns(
                    np.empty(0, dtype="U1"),
                    np.empty(0, dtype=np.int64),
                    np.empty(0),
                    np.empty(0),
                    np.empty(0, dtype=np.int64),
                    np.empty(0),
                ),
                RejectReport(),
            )
        if header.rstrip("\r\n") == PING_HEADER:
            fast = _parse_pings_fast(source, t_min, t_max)
            if fast is not None:
                return fast
    f, should_close = _open_text(source)
    report = RejectReport()
    table: list[str] = []
    codes: list[int] = []
    lat: list[float] = []
    lon: list[float] = []
    ts: list[int] = []
    prec: list[float] = []
    try:
        header = f.readline()
        if header == "":
            return (
                PingColumns(
                    np.empty(0, dtype="U1"),
                    np.empty(0, dtype=np.int64),
                    np.empty(0),
                    np.empty(0),
                    np.empty(0, dtype=np.int64),
                    np.empty(0),
                ),
                report,
            )
        if header.rstrip("\r\n") != PING_HEADER:
            raise MissingHeaderError(
                f"expected header {PING_HEADER!r}, got {header.rstrip()!r}"
            )
        isfinite = math.isfinite
        bump = report.bump
        has_window = t_min is not None or t_max is not None
        w_lo = t_min if t_min is not None else -(1 << 62)
        w_hi = t_max if t_max is not None else (1 << 62)
        intern: dict[str, int] = {}
        n_lines = 0
        c_append = codes.append
        la_append = lat.append
        lo_append = lon.append
        t_append = ts.append
        p_append = prec.append
        for line in f:
            n_lines += 1
            parts = line[:-1].split(",") if line.endswith("\n") else line.split(",")
            if len(parts) != 5:
                bump(REASON_FIELD_COUNT)
                continue
            d, la, lo, tt, pp = parts
            if not d:
                bump(REASON_EMPTY_DEVICE)
                continue
            try:
                laf = float(la)
                lof = float(lo)
                ti = int(tt)
                ppf = float(pp)
            except ValueError:
                bump(REASON_BAD_NUMBER)
                continue
            if not (isfinite(laf) and isfinite(lof) and isfinite(ppf)):
                bump(REASON_NONFINITE)
                continue
            if not -90.0 <= laf <= 90.0:
                bump(REASON_LAT_RANGE)
                continue
            if not -180.0 <= lof <= 180.0:
                bump(REASON_LON_RANGE)
                continue
            if ppf <= 0.0:
                bump(REASON_PRECISION)
                continue
            if has_window and (ti < w_lo or ti >= w_hi):
                bump(REASON_WINDOW)
                continue
            code = intern.get(d)
            if code is None:
                code = len(table)
                intern[d] = code
                table.append(d)
            c_append(code)
            la_append(laf)
            lo_append(lof)
            t_append(ti)
            p_append(ppf)
        report.n_lines = n_lines
    finally:
        if should_close:
            f.close()
    report.n_accepted = len(codes)
    cols = PingColumns(
        np.array(table, dtype="U") if table else np.empty(0, dtype="U1"),
        np.array(codes, dtype=np.int64),
        np.array(lat, dtype=np.float64),
        np.array(lon, dtype=np.float64),
        np.array(ts, dtype=np.int64),
        np.array(prec, dtype=np.float64),
    )
    return cols, report


def parse_pings(
    source: Union[str, IO],
    *,
    t_min: Optional[int] = None,
    t_max: Optional[int] = None,
) -> tuple[list[PingRecord], RejectReport]:
    """Record-level variant of :func:`parse_pings_columnar`."""
    cols, report = parse_pings_columnar(source, t_min=t_min, t_max=t_max)
    records = [
        PingRecord(str(d), float(la), float(lo), int(t), float(p))
        for d, la, lo, t, p in zip(cols.device_id, cols.lat, cols.lon, cols.t, cols.precision_m)
    ]
    return records, report


def load_block_groups(
    source: Union[str, IO],
    *,
    majority_threshold: float = 0.5,
    poverty_threshold: float = 0.3,
) -> list[BlockGroup]:
    """Load the census block-group CSV (strict; raises on malformed rows)."""
    f, should_close = _open_text(source)
    try:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingHeaderError("block-group file is empty")
        if header != BLOCK_GROUP_HEADER:
            raise MissingHeaderError(
                f"expected header {','.join(BLOCK_GROUP_HEADER)!r}, got {','.join(header)!r}"
            )
        seen: set[str] = set()
        out: list[BlockGroup] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(BLOCK_GROUP_HEADER):
                raise MalformedRowError(f"row {row_no}: expected 7 fields, got {len(row)}")
            gid, wkt, pop_s, w_s, b_s, h_s, pov_s = row
            if len(gid) != 12:
                raise MalformedRowError(f"row {row_no}: id {gid!r} is not a 12-character GEOID")
            if gid in seen:
                raise DuplicateIdError(f"row {row_no}: duplicate block-group id {gid}")
            seen.add(gid)
            try:
                geometry = parse_wkt(wkt)
            except MalformedWKTError as exc:
                raise MalformedWKTError(f"row {row_no}: {exc}") from exc
            try:
                pop = int(pop_s)
                n_w = int(w_s)
                n_b = int(b_s)
                n_h = int(h_s)
                pov = float(pov_s)
            except ValueError as exc:
                raise MalformedRowError(f"row {row_no}: non-numeric population field") from exc
            if pop < 0 or min(n_w, n_b, n_h) < 0 or n_w + n_b + n_h > pop:
                raise MalformedRowError(f"row {row_no}: race counts exceed total population")
            if not 0.0 <= pov <= 1.0:
                raise MalformedRowError(f"row {row_no}: poverty share {pov} outside [0, 1]")
            out.append(
                BlockGroup(
                    id=gid,
                    geometry=geometry,
                    population=pop,
                    n_white=n_w,
                    n_black=n_b,
                    n_hispanic=n_h,
                    poverty_share=pov,
                    classification=classify(
                        pop,
                        n_w,
                        n_b,
                        n_h,
                        pov,
                        majority_threshold=majority_threshold,
                        poverty_threshold=poverty_threshold,
                    ),
                )
            )
        return out
    finally:
        if should_close:
            f.close()


def partition_by_device(pings: Iterable[PingRecord]) -> dict[str, list[PingRecord]]:
    """Group pings by device, each list time-sorted (stable on ties)."""
    by_device: dict[str, list[PingRecord]] = defaultdict(list)
    for ping in pings:
        by_device[ping.device_id].append(ping)
    return {d: sorted(lst, key=lambda p: p.t) for d, lst in by_device.items()}


def sort_columns_by_device(cols: PingColumns) -> tuple[PingColumns, np.ndarray, np.ndarray]:
    """Stable-sort columns by (device_id, t).

    Returns the sorted columns plus the device ids in sorted order and the
    start offsets of each device's slice (length n_devices + 1).
    """
    if len(cols) == 0:
        return cols, np.empty(0, dtype="U1"), np.zeros(1, dtype=np.int64)
    table_order = np.argsort(cols.device_table, kind="stable")
    rank = np.empty(len(cols.device_table), dtype=np.int64)
    rank[table_order] = np.arange(len(cols.device_table))
    order = np.lexsort((cols.t, rank[cols.device_code]))
    sorted_cols = PingColumns(
        cols.device_table,
        cols.device_code[order],
        cols.lat[order],
        cols.lon[order],
        cols.t[order],
        cols.precision_m[order],
    )
    counts = np.bincount(rank[cols.device_code], minlength=len(cols.device_table))
    present = counts > 0
    devices = cols.device_table[table_order][present]
    bounds = np.concatenate([[0], np.cumsum(counts[present])]).astype(np.int64)
    return sorted_cols, devices, bounds
