"""Deterministic synthetic mobility scenarios with ground-truth manifests.

The generator plants a grid of square block groups, samples device
ownership per block group binomially, gives every device a fixed daily
routine (a nightly dwell at a home anchor plus 1-5 daytime anchor
visits), and emits the exact ping/block-group CSVs the pipeline ingests
together with manifest CSVs describing the planted truth.

Randomness comes from counter-based splitmix64 streams (constants below),
so identical (config, seed) pairs produce byte-identical files on any
platform, and every (device, day, visit) draws from its own keyed
substream: perturbing one visit never shifts another visit's stream.

A disruption window models storm effects: daytime visits are thinned so
the expected weekly stay-point count scales by the contraction factor
(nights are never thinned, they anchor the home rule), reported precision
values are inflated, and pings are dropped with the dropout probability.
Precision inflation and dropout apply per ping by the ping's week;
thinning applies per visit by the visit's start week.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .fileio import atomic_text, write_csv
from .timeutil import SECONDS_PER_DAY, SECONDS_PER_HOUR, SECONDS_PER_WEEK, StudyWindow

MASK64 = (1 << 64) - 1
SM_GAMMA = 0x9E3779B97F4A7C15
SM_MIX1 = 0xBF58476D1CE4E5B9
SM_MIX2 = 0x94D049BB133111EB

METERS_PER_DEG_LAT = 111_320.0

# substream purposes
_P_POP = 1
_P_DEVCOUNT = 2
_P_DEVICE = 3
_P_GAPS = 4
_P_NOISE = 5
_P_PREC = 6
_P_DROP = 7
_P_THIN = 8
_P_JITTER = 9


class InvalidConfigError(ValueError):
    pass


def _mix_int(x: int) -> int:
    x = ((x ^ (x >> 30)) * SM_MIX1) & MASK64
    x = ((x ^ (x >> 27)) * SM_MIX2) & MASK64
    return x ^ (x >> 31)


def splitmix64(x: int) -> int:
    return _mix_int((x + SM_GAMMA) & MASK64)


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * np.uint64(SM_MIX1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(SM_MIX2)
    return x ^ (x >> np.uint64(31))


def derive_key(seed: int, *labels: int) -> int:
    key = splitmix64(seed & MASK64)
    for label in labels:
        key = splitmix64(key ^ (label & MASK64))
    return key


_U53 = 2.0**-53


class Stream:
    """Counter-based splitmix64 substream: value_i = mix(key + i * gamma)."""

    __slots__ = ("key", "cursor")

    def __init__(self, key: int):
        self.key = int(key) & MASK64
        self.cursor = 1

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.cursor, self.cursor + n, dtype=np.uint64)
        self.cursor += n
        return _mix_array(np.uint64(self.key) + idx * np.uint64(SM_GAMMA))

    def uniforms(self, n: int) -> np.ndarray:
        return (self._raw(n) >> np.uint64(11)) * _U53

    def uniform(self) -> float:
        # scalar fast path, bit-identical to the array recurrence
        value = _mix_int((self.key + self.cursor * SM_GAMMA) & MASK64)
        self.cursor += 1
        return (value >> 11) * _U53

    def normals(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniforms(2 * m)
        r = np.sqrt(-2.0 * np.log1p(-u[:m]))
        theta = (2.0 * math.pi) * u[m:]
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def exponentials(self, n: int, mean: float) -> np.ndarray:
        return -mean * np.log1p(-self.uniforms(n))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + min(hi - lo, int(self.uniform() * (hi - lo + 1)))

    def binomial(self, n: int, p: float) -> int:
        if n <= 0 or p <= 0.0:
            return 0
        if p >= 1.0:
            return n
        return int(np.count_nonzero(self.uniforms(n) < p))


def stream(seed: int, *labels: int) -> Stream:
    return Stream(derive_key(seed, *labels))


# ---------------------------------------------------------------------------
# configuration


_RACE_MIX = {
    "white": (0.70, 0.15, 0.15),
    "black": (0.15, 0.70, 0.15),
    "hispanic": (0.15, 0.15, 0.70),
    "mixed": (0.40, 0.35, 0.25),
}

VIOLATION_MISSING_DAY = "missing_day"
VIOLATION_SPLIT_HOME = "split_home"
VIOLATION_UNLOCATABLE = "unlocatable"
_VIOLATION_KINDS = (VIOLATION_MISSING_DAY, VIOLATION_SPLIT_HOME, VIOLATION_UNLOCATABLE)

# lines that the ping parser must reject, used for planted corruption
_CORRUPT_TEMPLATES = (
    "",
    "corrupt,91.5,0.0,{t},5.0",
    "corrupt,0.0,181.0,{t},5.0",
    "corrupt,0.0,0.0,{t},-2.0",
    "corrupt,0.0,0.0,{t},abc",
    "corrupt,0.0,0.0",
    "corrupt,nan,0.0,{t},5.0",
    ",0.0,0.0,{t},5.0",
)


@dataclass(frozen=True)
class SynthClass:
    """One planted neighborhood class.

    ``name`` selects the majority race mix and must be one of white,
    black, hispanic, or mixed.
    """

    name: str
    n_block_groups: int
    population: int
    ownership_rate: float
    poor: bool = False


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    weeks: int = 9
    study_start: str = "2017-07-31"
    tz_offset_hours: float = -5.0
    classes: tuple[SynthClass, ...] = (
        SynthClass("white", 10, 400, 0.08, poor=False),
        SynthClass("black", 10, 400, 0.04, poor=True),
        SynthClass("hispanic", 10, 400, 0.04, poor=True),
    )
    pop_spread: float = 0.0  # per-block-group multiplier drawn from 1 +/- spread
    min_day_anchors: int = 1
    max_day_anchors: int = 5
    mean_ping_interval_s: float = 600.0
    noise_sigma_m: float = 10.0
    precision_median_m: float = 20.0
    precision_log_sigma: float = 0.5
    night_start_hour: int = 21
    night_end_hour: int = 6
    day_visit_duration_s: int = 3600
    disruption_weeks: tuple[int, ...] = ()
    contraction: float = 1.0
    precision_inflation: float = 1.0
    dropout: float = 0.0
    rule_violator_fraction: float = 0.0
    corrupt_lines: int = 0
    cell_deg: float = 0.02
    origin_lat: float = 29.4
    origin_lon: float = -95.8

    def validate(self) -> None:
        if self.weeks < 1:
            raise InvalidConfigError("weeks must be >= 1")
        if not self.classes:
            raise InvalidConfigError("at least one class is required")
        for cls in self.classes:
            if cls.name not in _RACE_MIX:
                raise InvalidConfigError(f"unknown class name {cls.name!r}")
            if cls.n_block_groups < 1 or cls.population < 1:
                raise InvalidConfigError("class sizes must be positive")
            if not 0.0 <= cls.ownership_rate <= 1.0:
                raise InvalidConfigError("ownership rate must be in [0, 1]")
        if not 0.0 <= self.pop_spread < 1.0:
            raise InvalidConfigError("pop_spread must be in [0, 1)")
        if not 1 <= self.min_day_anchors <= self.max_day_anchors <= 5:
            raise InvalidConfigError("day anchors must satisfy 1 <= min <= max <= 5")
        if self.mean_ping_interval_s <= 0 or self.noise_sigma_m < 0:
            raise InvalidConfigError("ping interval must be positive, noise sigma >= 0")
        if self.precision_median_m <= 0 or self.precision_log_sigma < 0:
            raise InvalidConfigError("precision parameters must be positive")
        if not 0.0 <= self.dropout <= 1.0:
            raise InvalidConfigError("dropout must be in [0, 1]")
        if self.precision_inflation < 1.0:
            raise InvalidConfigError("precision inflation factor must be >= 1")
        if not 0.0 < self.contraction <= 1.0:
            raise InvalidConfigError("contraction factor must be in (0, 1]")
        if self.contraction < 1.0 / (1.0 + self.min_day_anchors):
            raise InvalidConfigError(
                "contraction below 1/(1+min_day_anchors) cannot be realized by "
                "thinning daytime visits alone"
            )
        if not 0.0 <= self.rule_violator_fraction <= 1.0:
            raise InvalidConfigError("rule_violator_fraction must be in [0, 1]")
        if self.rule_violator_fraction > 0 and self.total_block_groups() < 2:
            raise InvalidConfigError("split-home violators need at least 2 block groups")
        for week in self.disruption_weeks:
            if not 1 <= week <= self.weeks:
                raise InvalidConfigError(f"disruption week {week} outside 1..{self.weeks}")
        if self.corrupt_lines < 0:
            raise InvalidConfigError("corrupt_lines must be >= 0")

    def total_block_groups(self) -> int:
        return sum(c.n_block_groups for c in self.classes)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class DeviceTruth:
    device_id: str
    block_group_id: str  # empty for unlocatable plants
    race_class: str
    poverty_class: str
    n_day_anchors: int
    rule_violation: str  # empty when the device satisfies the home rule
    n_pings: int = 0


@dataclass(frozen=True)
class ClassTruth:
    name: str
    race_class: str
    poverty_class: str
    n_block_groups: int
    base_population: int
    ownership_rate: float
    n_devices: int


@dataclass(frozen=True)
class WeekTruth:
    week: int
    q_sp_scale: float
    precision_median_m: float


@dataclass
class TruthManifest:
    devices: list[DeviceTruth]
    classes: list[ClassTruth]
    weeks: list[WeekTruth]


_DEVICES_HEADER = [
    "device_id",
    "block_group_id",
    "race_class",
    "poverty_class",
    "n_day_anchors",
    "rule_violation",
    "n_pings",
]
_CLASSES_HEADER = [
    "name",
    "race_class",
    "poverty_class",
    "n_block_groups",
    "base_population",
    "ownership_rate",
    "n_devices",
]
_WEEKS_HEADER = ["week", "q_sp_scale", "precision_median_m"]


def load_manifest(out_dir: str | Path) -> TruthManifest:
    from .fileio import read_csv_rows

    out_dir = Path(out_dir)
    devices = [
        DeviceTruth(r[0], r[1], r[2], r[3], int(r[4]), r[5], int(r[6]))
        for r in read_csv_rows(out_dir / "manifest_devices.csv", _DEVICES_HEADER)
    ]
    classes = [
        ClassTruth(r[0], r[1], r[2], int(r[3]), int(r[4]), float(r[5]), int(r[6]))
        for r in read_csv_rows(out_dir / "manifest_classes.csv", _CLASSES_HEADER)
    ]
    weeks = [
        WeekTruth(int(r[0]), float(r[1]), float(r[2]))
        for r in read_csv_rows(out_dir / "manifest_weeks.csv", _WEEKS_HEADER)
    ]
    return TruthManifest(devices, classes, weeks)


# ---------------------------------------------------------------------------
# layout and planting


@dataclass(frozen=True)
class _PlantedBG:
    index: int
    geoid: str
    lat0: float
    lon0: float
    class_index: int
    population: int


@dataclass
class _PlantedDevice:
    index: int
    device_id: str
    origin_bg: int  # block group the device was drawn from (class attribution)
    home_bg: Optional[int]  # None when the home is planted outside the region
    home_lat: float
    home_lon: float
    alt_bg: Optional[int]
    alt_lat: float
    alt_lon: float
    day_anchors: list[tuple[float, float]]
    violation: str


@dataclass(frozen=True)
class Visit:
    day: int
    slot: int  # 0 = night, 1..K = daytime anchors
    lat: float
    lon: float
    start_rel: int
    end_rel: int
    is_night: bool


@dataclass
class DeviceSchedule:
    device: _PlantedDevice
    visits: list[Visit]


def _bg_geoid(index: int) -> str:
    return f"48201{index // 3:06d}{index % 3 + 1}"


def _layout_block_groups(cfg: SynthConfig) -> list[_PlantedBG]:
    total = cfg.total_block_groups()
    cols = max(1, math.ceil(math.sqrt(total)))
    out = []
    index = 0
    for class_index, cls in enumerate(cfg.classes):
        for _ in range(cls.n_block_groups):
            r, c = divmod(index, cols)
            pop = cls.population
            if cfg.pop_spread > 0:
                # one multiplier per tract (3 block groups), so tract sums
                # are smoother than their parts, as in real census geography
                u = stream(cfg.seed, _P_POP, index // 3).uniform()
                pop = max(1, int(round(pop * (1.0 - cfg.pop_spread + 2.0 * cfg.pop_spread * u))))
            out.append(
                _PlantedBG(
                    index=index,
                    geoid=_bg_geoid(index),
                    lat0=cfg.origin_lat + r * cfg.cell_deg,
                    lon0=cfg.origin_lon + c * cfg.cell_deg,
                    class_index=class_index,
                    population=pop,
                )
            )
            index += 1
    return out


def _bg_wkt(cfg: SynthConfig, bg: _PlantedBG) -> str:
    lat0, lon0 = bg.lat0, bg.lon0
    lat1, lon1 = lat0 + cfg.cell_deg, lon0 + cfg.cell_deg
    ring = f"{lon0:.6f} {lat0:.6f},{lon1:.6f} {lat0:.6f},{lon1:.6f} {lat1:.6f},{lon0:.6f} {lat1:.6f},{lon0:.6f} {lat0:.6f}"
    return f"POLYGON(({ring}))"


def _point_in_bg(cfg: SynthConfig, bg: _PlantedBG, u: float, v: float) -> tuple[float, float]:
    # central 60% of the cell keeps noisy centroids away from boundaries
    return (
        bg.lat0 + cfg.cell_deg * (0.2 + 0.6 * u),
        bg.lon0 + cfg.cell_deg * (0.2 + 0.6 * v),
    )


def _plant_devices(cfg: SynthConfig, bgs: list[_PlantedBG]) -> list[_PlantedDevice]:
    devices: list[_PlantedDevice] = []
    index = 0
    for bg in bgs:
        cls = cfg.classes[bg.class_index]
        n_dev = stream(cfg.seed, _P_DEVCOUNT, bg.index).binomial(bg.population, cls.ownership_rate)
        for j in range(n_dev):
            s = stream(cfg.seed, _P_DEVICE, index)
            u_violate = s.uniform()
            u_kind = s.uniform()
            violation = ""
            if cfg.rule_violator_fraction > 0 and u_violate < cfg.rule_violator_fraction:
                violation = _VIOLATION_KINDS[min(2, int(u_kind * 3))]
            k = s.randint(cfg.min_day_anchors, cfg.max_day_anchors)
            home_lat, home_lon = _point_in_bg(cfg, bg, s.uniform(), s.uniform())
            alt_index = (bg.index + len(bgs) // 2 + 1) % len(bgs)
            if alt_index == bg.index:
                alt_index = (bg.index + 1) % len(bgs)
            alt_lat, alt_lon = _point_in_bg(cfg, bgs[alt_index], s.uniform(), s.uniform())
            anchors = []
            for _ in range(k):
                a_bg = bgs[min(len(bgs) - 1, int(s.uniform() * len(bgs)))]
                anchors.append(_point_in_bg(cfg, a_bg, s.uniform(), s.uniform()))
            home_bg: Optional[int] = bg.index
            if violation == VIOLATION_UNLOCATABLE:
                home_bg = None
                home_lat = cfg.origin_lat - 0.5
                home_lon = cfg.origin_lon - 0.5
            devices.append(
                _PlantedDevice(
                    index=index,
                    device_id=f"d{bg.index:03d}x{j:05d}",
                    origin_bg=bg.index,
                    home_bg=home_bg,
                    home_lat=home_lat,
                    home_lon=home_lon,
                    alt_bg=alt_index if violation == VIOLATION_SPLIT_HOME else None,
                    alt_lat=alt_lat,
                    alt_lon=alt_lon,
                    day_anchors=anchors,
                    violation=violation,
                )
            )
            index += 1
    return devices


# ---------------------------------------------------------------------------
# schedules and pings


def _night_length_s(cfg: SynthConfig) -> int:
    if cfg.night_end_hour <= cfg.night_start_hour:
        hours = 24 - cfg.night_start_hour + cfg.night_end_hour
    else:
        hours = cfg.night_end_hour - cfg.night_start_hour
    return hours * SECONDS_PER_HOUR


def build_schedule(cfg: SynthConfig, device: _PlantedDevice) -> DeviceSchedule:
    """The device's un-perturbed visit timeline over the whole study."""
    horizon = cfg.weeks * SECONDS_PER_WEEK
    night_len = _night_length_s(cfg)
    visits: list[Visit] = []
    for day in range(cfg.weeks * 7):
        weekday = day % 7
        day_start = day * SECONDS_PER_DAY
        skip_night = device.violation == VIOLATION_MISSING_DAY and weekday == 2
        if skip_night:
            # one transit ping far from every anchor; a single ping can never
            # form a stay point but it stops same-anchor day visits from
            # chaining across the absent night
            start = day_start + cfg.night_start_hour * SECONDS_PER_HOUR + 2 * SECONDS_PER_HOUR
            if start + 1 <= horizon:
                visits.append(
                    Visit(day, 9, cfg.origin_lat - 0.7, cfg.origin_lon - 0.7, start, start + 1, True)
                )
        else:
            if device.violation == VIOLATION_SPLIT_HOME and weekday in (2, 3):
                nlat, nlon = device.alt_lat, device.alt_lon
            else:
                nlat, nlon = device.home_lat, device.home_lon
            start = day_start + cfg.night_start_hour * SECONDS_PER_HOUR
            end = min(start + night_len, horizon)
            if end > start:
                visits.append(Visit(day, 0, nlat, nlon, start, end, True))
        for slot, (alat, alon) in enumerate(device.day_anchors, start=1):
            jitter = stream(cfg.seed, _P_JITTER, device.index, day, slot)
            start = day_start + 10 * SECONDS_PER_HOUR + (slot - 1) * 5400
            start += int(jitter.uniform() * 900)
            end = min(start + cfg.day_visit_duration_s + int(jitter.uniform() * 900), horizon)
            if end > start:
                visits.append(Visit(day, slot, alat, alon, start, end, False))
    return DeviceSchedule(device, visits)


def _keep_probability(cfg: SynthConfig, n_day_anchors: int) -> float:
    # thin daytime visits so the expected weekly stay-point count
    # (7 nights + 7*K day visits) scales by the contraction factor
    k = n_day_anchors
    return min(1.0, max(0.0, (cfg.contraction * (7.0 + 7.0 * k) - 7.0) / (7.0 * k)))


def perturb_timeline(schedule: DeviceSchedule, cfg: SynthConfig) -> DeviceSchedule:
    """Thin daytime visits inside the disruption window.

    Nights are never thinned (they carry the home signal). Precision
    inflation and dropout are applied per ping at emission time, keyed by
    the ping's week.
    """
    if not cfg.disruption_weeks or cfg.contraction >= 1.0:
        return schedule
    keep_p = _keep_probability(cfg, len(schedule.device.day_anchors))
    disrupted = set(cfg.disruption_weeks)
    kept = []
    for visit in schedule.visits:
        week = visit.start_rel // SECONDS_PER_WEEK + 1
        if visit.is_night or week not in disrupted:
            kept.append(visit)
            continue
        u = stream(cfg.seed, _P_THIN, schedule.device.index, visit.day, visit.slot).uniform()
        if u < keep_p:
            kept.append(visit)
    return DeviceSchedule(schedule.device, kept)


def _emit_visit_pings(
    cfg: SynthConfig, sw: StudyWindow, device: _PlantedDevice, visit: Visit, disrupted: set[int]
) -> list[str]:
    duration = visit.end_rel - visit.start_rel
    gaps_stream = stream(cfg.seed, _P_GAPS, device.index, visit.day, visit.slot)
    gaps: list[np.ndarray] = []
    total = 0.0
    while total < duration:
        block = gaps_stream.exponentials(max(8, int(duration / cfg.mean_ping_interval_s) + 4), cfg.mean_ping_interval_s)
        gaps.append(block)
        total += float(block.sum())
    offsets = np.concatenate([[0.0], np.cumsum(np.concatenate(gaps))])
    offsets = offsets[offsets < duration]
    n = offsets.shape[0]
    if n == 0:
        return []
    t_rel = visit.start_rel + np.floor(offsets).astype(np.int64)
    noise = stream(cfg.seed, _P_NOISE, device.index, visit.day, visit.slot).normals(2 * n)
    lat = visit.lat + noise[:n] * (cfg.noise_sigma_m / METERS_PER_DEG_LAT)
    lon = visit.lon + noise[n:] * (
        cfg.noise_sigma_m / (METERS_PER_DEG_LAT * math.cos(visit.lat * math.pi / 180.0))
    )
    prec = cfg.precision_median_m * np.exp(
        cfg.precision_log_sigma
        * stream(cfg.seed, _P_PREC, device.index, visit.day, visit.slot).normals(n)
    )
    in_disruption = np.isin(t_rel // SECONDS_PER_WEEK + 1, list(disrupted)) if disrupted else None
    if disrupted and cfg.precision_inflation > 1.0:
        prec = np.where(in_disruption, prec * cfg.precision_inflation, prec)
    keep = np.ones(n, dtype=bool)
    if disrupted and cfg.dropout > 0.0:
        u = stream(cfg.seed, _P_DROP, device.index, visit.day, visit.slot).uniforms(n)
        keep = ~(in_disruption & (u < cfg.dropout))
    lines = []
    dev = device.device_id
    for i in range(n):
        if not keep[i]:
            continue
        lines.append(f"{dev},{lat[i]:.7f},{lon[i]:.7f},{sw.epoch(int(t_rel[i]))},{prec[i]:.3f}\n")
    return lines


def generate(cfg: SynthConfig, out_dir: str | Path) -> TruthManifest:
    """Write pings.csv, block_groups.csv, and the manifest CSVs.

    Output is byte-identical for identical (config, seed).
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sw = StudyWindow.create(cfg.study_start, cfg.weeks, cfg.tz_offset_hours)
    bgs = _layout_block_groups(cfg)

    bg_rows = []
    for bg in bgs:
        cls = cfg.classes[bg.class_index]
        w_share, b_share, h_share = _RACE_MIX[cls.name]
        pop = bg.population
        bg_rows.append(
            (
                bg.geoid,
                '"' + _bg_wkt(cfg, bg) + '"',
                pop,
                int(w_share * pop),
                int(b_share * pop),
                int(h_share * pop),
                0.45 if cls.poor else 0.1,
            )
        )
    with atomic_text(out_dir / "block_groups.csv") as f:
        f.write("id,wkt,pop_total,pop_white,pop_black,pop_hispanic,poverty_share\n")
        for row in bg_rows:
            f.write(",".join(str(v) for v in row) + "\n")

    devices = _plant_devices(cfg, bgs)
    disrupted = set(cfg.disruption_weeks)
    corrupt_left = cfg.corrupt_lines
    corrupt_emitted = 0
    stride = max(1, len(devices) // (cfg.corrupt_lines + 1)) if cfg.corrupt_lines else 0
    valid_t = sw.t_min + SECONDS_PER_HOUR

    truths: list[DeviceTruth] = []
    with atomic_text(out_dir / "pings.csv") as f:
        f.write("device_id,lat,lon,t,precision_m\n")
        for device in devices:
            schedule = perturb_timeline(build_schedule(cfg, device), cfg)
            n_pings = 0
            for visit in schedule.visits:
                lines = _emit_visit_pings(cfg, sw, device, visit, disrupted)
                n_pings += len(lines)
                f.writelines(lines)
            origin = bgs[device.origin_bg]
            cls = cfg.classes[origin.class_index]
            truths.append(
                DeviceTruth(
                    device_id=device.device_id,
                    block_group_id=origin.geoid if device.home_bg is not None else "",
                    race_class=f"majority_{cls.name}" if cls.name != "mixed" else "no_majority",
                    poverty_class="poor" if cls.poor else "nonpoor",
                    n_day_anchors=len(device.day_anchors),
                    rule_violation=device.violation,
                    n_pings=n_pings,
                )
            )
            if corrupt_left and (device.index + 1) % stride == 0:
                template = _CORRUPT_TEMPLATES[corrupt_emitted % len(_CORRUPT_TEMPLATES)]
                f.write(template.format(t=valid_t) + "\n")
                corrupt_left -= 1
                corrupt_emitted += 1
        while corrupt_left:
            template = _CORRUPT_TEMPLATES[corrupt_emitted % len(_CORRUPT_TEMPLATES)]
            f.write(template.format(t=valid_t) + "\n")
            corrupt_left -= 1
            corrupt_emitted += 1

    class_rows = []
    for class_index, cls in enumerate(cfg.classes):
        n_dev = sum(1 for d in devices if bgs[d.origin_bg].class_index == class_index)
        class_rows.append(
            ClassTruth(
                name=cls.name,
                race_class=f"majority_{cls.name}" if cls.name != "mixed" else "no_majority",
                poverty_class="poor" if cls.poor else "nonpoor",
                n_block_groups=cls.n_block_groups,
                base_population=cls.population,
                ownership_rate=cls.ownership_rate,
                n_devices=n_dev,
            )
        )
    week_rows = [
        WeekTruth(
            week=w,
            q_sp_scale=cfg.contraction if w in disrupted else 1.0,
            precision_median_m=cfg.precision_median_m
            * (cfg.precision_inflation if w in disrupted else 1.0),
        )
        for w in range(1, cfg.weeks + 1)
    ]

    write_csv(
        out_dir / "manifest_devices.csv",
        _DEVICES_HEADER,
        (
            (t.device_id, t.block_group_id, t.race_class, t.poverty_class, t.n_day_anchors, t.rule_violation, t.n_pings)
            for t in truths
        ),
    )
    write_csv(
        out_dir / "manifest_classes.csv",
        _CLASSES_HEADER,
        (
            (c.name, c.race_class, c.poverty_class, c.n_block_groups, c.base_population, c.ownership_rate, c.n_devices)
            for c in class_rows
        ),
    )
    write_csv(
        out_dir / "manifest_weeks.csv",
        _WEEKS_HEADER,
        ((w.week, w.q_sp_scale, w.precision_median_m) for w in week_rows),
    )
    return TruthManifest(truths, class_rows, week_rows)
