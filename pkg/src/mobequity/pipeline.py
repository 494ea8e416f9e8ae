"""Pipeline stages: validate, staypoints, homes, metrics, report, synth, all.

Each stage reads only the declared outputs of earlier stages, writes its
outputs atomically, and emits a machine-readable JSON summary. Device
fan-out uses a thread pool (the hot kernels release the GIL when the
numba path is active); results are merged in device order, so the report
files are byte-identical for any worker count.
"""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import metrics, stats, synth
from .config import PipelineConfig
from .fileio import atomic_text, fmt, read_csv_rows, write_csv, write_json
from .geo import GridIndex, build_index
from .home import (
    HomeAssignment,
    HomeRejection,
    assign_week_home,
)
from .ingest import (
    BlockGroup,
    load_block_groups,
    parse_pings_columnar,
    sort_columns_by_device,
)
from .staypoints import StayPoint, detect_spans, spans_to_staypoints, staypoint_block_group
from .timeutil import SECONDS_PER_WEEK

REJECTIONS_HEADER = ["reason", "count"]
STAYPOINTS_HEADER = [
    "device_id",
    "lat",
    "lon",
    "t_start",
    "t_end",
    "n_pings",
    "median_precision_m",
    "block_group_id",
]
HOMES_HEADER = ["device_id", "week", "block_group_id"]
HOME_REJECTIONS_HEADER = ["week", "reason", "count"]
HOME_COUNTS_HEADER = ["week", "block_group_id", "x"]
DEVICE_WEEK_HEADER = [
    "device_id",
    "week",
    "block_group_id",
    "race_class",
    "poverty_class",
    "q_h",
    "q_sp",
    "mu_hat",
]
REPRESENTATIVENESS_HEADER = [
    "week",
    "block_group_id",
    "race_class",
    "poverty_class",
    "x",
    "population",
    "p",
    "flagged",
]
CLASS_METRICS_HEADER = [
    "week",
    "partition",
    "class",
    "metric",
    "n",
    "median",
    "ci_lo",
    "ci_hi",
    "small_sample",
]
TESTS_HEADER = [
    "week",
    "partition",
    "metric",
    "class_a",
    "class_b",
    "statistic",
    "p_value",
    "stars",
    "n_a",
    "n_b",
    "degenerate",
]
CORRELATIONS_HEADER = ["week", "level", "n", "r", "p_value", "stars"]
CHOROPLETH_HEADER = ["week", "block_group_id", "x", "bin"]

_RACE_ORDER = ["majority_white", "majority_black", "majority_hispanic", "no_majority"]
_POVERTY_ORDER = ["nonpoor", "poor"]
_METRIC_ORDER = ["p", "q_h", "q_sp", "mu_hat"]
_TEST_PAIRS = {
    "race": [("majority_white", "majority_black"), ("majority_white", "majority_hispanic")],
    "poverty": [("nonpoor", "poor")],
}


def _chunks(n: int, workers: int) -> list[range]:
    if n == 0:
        return []
    size = max(1, -(-n // max(1, workers * 4)))
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _map_chunks(fn, chunks: Sequence[range], workers: int) -> list:
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _load_groups(cfg: PipelineConfig) -> list[BlockGroup]:
    return load_block_groups(
        cfg.block_groups_path,
        majority_threshold=cfg.majority_threshold,
        poverty_threshold=cfg.poverty_threshold,
    )


def _build_index(cfg: PipelineConfig, groups: Sequence[BlockGroup]) -> GridIndex:
    return build_index([(g.id, g.geometry) for g in groups], cell_deg=cfg.grid_cell_deg)


# ---------------------------------------------------------------------------
# stages


def run_synth(cfg: PipelineConfig) -> dict:
    manifest = synth.generate(cfg.synth, cfg.output_dir)
    summary = {
        "stage": "synth",
        "seed": cfg.synth.seed,
        "devices": len(manifest.devices),
        "block_groups": cfg.synth.total_block_groups(),
        "pings": sum(t.n_pings for t in manifest.devices),
        "corrupt_lines": cfg.synth.corrupt_lines,
    }
    write_json(cfg.out_path("summary_synth.json"), summary)
    return summary


def run_validate(cfg: PipelineConfig) -> dict:
    window = cfg.study_window()
    _, report = parse_pings_columnar(cfg.pings_path, t_min=window.t_min, t_max=window.t_max)
    groups = _load_groups(cfg)
    write_csv(cfg.out_path("rejections.csv"), REJECTIONS_HEADER, report.rows())
    summary = {
        "stage": "validate",
        "lines": report.n_lines,
        "accepted": report.n_accepted,
        "rejected": dict(sorted(report.counts.items())),
        "block_groups": len(groups),
        "unclassifiable_block_groups": sum(1 for g in groups if g.classification is None),
    }
    write_json(cfg.out_path("summary_validate.json"), summary)
    return summary


def run_staypoints(cfg: PipelineConfig) -> dict:
    window = cfg.study_window()
    cols, report = parse_pings_columnar(cfg.pings_path, t_min=window.t_min, t_max=window.t_max)
    cols, devices, bounds = sort_columns_by_device(cols)
    groups = _load_groups(cfg)
    index = _build_index(cfg, groups)

    def work(device_range: range) -> list[str]:
        lines = []
        for di in device_range:
            lo, hi = int(bounds[di]), int(bounds[di + 1])
            spans = detect_spans(
                cols.lat[lo:hi],
                cols.lon[lo:hi],
                cols.t[lo:hi],
                cfg.staypoint_min_duration_s,
                cfg.staypoint_max_distance_m,
            )
            sps = spans_to_staypoints(
                str(devices[di]),
                cols.lat[lo:hi],
                cols.lon[lo:hi],
                cols.t[lo:hi],
                cols.precision_m[lo:hi],
                spans,
            )
            for sp in sps:
                bg = staypoint_block_group(sp, index) or ""
                lines.append(
                    f"{sp.device_id},{fmt(sp.lat)},{fmt(sp.lon)},{sp.t_start},{sp.t_end},"
                    f"{sp.n_pings},{fmt(sp.median_precision_m)},{bg}\n"
                )
        return lines

    results = _map_chunks(work, _chunks(len(devices), cfg.workers), cfg.workers)
    n_staypoints = 0
    with atomic_text(cfg.out_path("staypoints.csv")) as f:
        f.write(",".join(STAYPOINTS_HEADER) + "\n")
        for lines in results:
            n_staypoints += len(lines)
            f.writelines(lines)
    summary = {
        "stage": "staypoints",
        "devices": int(len(devices)),
        "pings": report.n_accepted,
        "staypoints": n_staypoints,
    }
    write_json(cfg.out_path("summary_staypoints.json"), summary)
    return summary


def _read_staypoints_by_device(path) -> dict[str, list[StayPoint]]:
    out: dict[str, list[StayPoint]] = defaultdict(list)
    for r in read_csv_rows(path, STAYPOINTS_HEADER):
        out[r[0]].append(
            StayPoint(r[0], float(r[1]), float(r[2]), int(r[3]), int(r[4]), int(r[5]), float(r[6]))
        )
    return dict(out)


def run_homes(cfg: PipelineConfig) -> dict:
    window = cfg.study_window()
    by_device = _read_staypoints_by_device(cfg.out_path("staypoints.csv"))
    groups = _load_groups(cfg)
    index = _build_index(cfg, groups)
    device_ids = sorted(by_device)

    def work(device_range: range) -> tuple[list[str], dict[tuple[int, str], int]]:
        lines: list[str] = []
        rejects: dict[tuple[int, str], int] = {}
        for di in device_range:
            device_id = device_ids[di]
            sps = by_device[device_id]
            weeks_present = {
                window.week_of_rel(window.rel(sp.t_start)) for sp in sps
            } - {0}
            for week in sorted(weeks_present):
                result = assign_week_home(
                    sps,
                    week,
                    window,
                    index,
                    max_diameter_m=cfg.cluster_max_diameter_m,
                    night_start_hour=cfg.night_start_hour,
                    night_end_hour=cfg.night_end_hour,
                )
                if isinstance(result, HomeAssignment):
                    lines.append(f"{device_id},{week},{result.block_group_id}\n")
                else:
                    key = (week, result.reason)
                    rejects[key] = rejects.get(key, 0) + 1
        return lines, rejects

    results = _map_chunks(work, _chunks(len(device_ids), cfg.workers), cfg.workers)
    reject_counts: dict[tuple[int, str], int] = defaultdict(int)
    n_assigned = 0
    with atomic_text(cfg.out_path("homes.csv")) as f:
        f.write(",".join(HOMES_HEADER) + "\n")
        for lines, rejects in results:
            n_assigned += len(lines)
            f.writelines(lines)
            for key, count in rejects.items():
                reject_counts[key] += count
    write_csv(
        cfg.out_path("home_rejections.csv"),
        HOME_REJECTIONS_HEADER,
        [(w, reason, c) for (w, reason), c in sorted(reject_counts.items())],
    )
    summary = {
        "stage": "homes",
        "devices": len(device_ids),
        "assignments": n_assigned,
        "rejections": {f"{w}:{reason}": c for (w, reason), c in sorted(reject_counts.items())},
    }
    write_json(cfg.out_path("summary_homes.json"), summary)
    return summary


def run_metrics(cfg: PipelineConfig) -> dict:
    window = cfg.study_window()
    groups = _load_groups(cfg)
    bg_by_id = {g.id: g for g in groups}
    homes = [
        (r[0], int(r[1]), r[2]) for r in read_csv_rows(cfg.out_path("homes.csv"), HOMES_HEADER)
    ]
    by_device_sp = _read_staypoints_by_device(cfg.out_path("staypoints.csv"))

    cols, _ = parse_pings_columnar(cfg.pings_path, t_min=window.t_min, t_max=window.t_max)
    cols, ping_devices, bounds = sort_columns_by_device(cols)
    device_slice = {
        str(d): (int(bounds[i]), int(bounds[i + 1])) for i, d in enumerate(ping_devices)
    }

    device_week_rows = []
    counts_by_week: dict[int, dict[str, int]] = defaultdict(dict)
    for device_id, week, bg_id in homes:
        counts = counts_by_week[week]
        counts[bg_id] = counts.get(bg_id, 0) + 1
        q_h, q_sp = metrics.device_week_quantity(
            by_device_sp.get(device_id, []), week, window
        )
        lo, hi = device_slice[device_id]
        rel = cols.t[lo:hi] - window.start_epoch
        w_lo, w_hi = window.week_bounds_rel(week)
        a = int(np.searchsorted(rel, w_lo, side="left"))
        b = int(np.searchsorted(rel, w_hi, side="left"))
        mu = metrics.device_week_precision(cols.precision_m[lo + a : lo + b])
        bg = bg_by_id[bg_id]
        race = bg.classification.race.value if bg.classification else ""
        poverty = bg.classification.poverty.value if bg.classification else ""
        device_week_rows.append((device_id, week, bg_id, race, poverty, q_h, q_sp, mu))
    device_week_rows.sort(key=lambda r: (r[0], r[1]))
    write_csv(cfg.out_path("device_week_metrics.csv"), DEVICE_WEEK_HEADER, device_week_rows)

    count_rows = []
    for week in sorted(counts_by_week):
        for bg_id, x in sorted(counts_by_week[week].items()):
            count_rows.append((week, bg_id, x))
    write_csv(cfg.out_path("home_counts.csv"), HOME_COUNTS_HEADER, count_rows)

    repr_rows = []
    flagged = 0
    for week in sorted(counts_by_week):
        counts = counts_by_week[week]
        for g in groups:
            if g.classification is None or g.population <= 0:
                continue
            x = counts.get(g.id, 0)
            p = metrics.representativeness(x, g.population)
            is_flagged = p > 1.0
            flagged += int(is_flagged)
            repr_rows.append(
                (
                    week,
                    g.id,
                    g.classification.race.value,
                    g.classification.poverty.value,
                    x,
                    g.population,
                    p,
                    int(is_flagged),
                )
            )
    write_csv(cfg.out_path("representativeness.csv"), REPRESENTATIVENESS_HEADER, repr_rows)

    conservation_ok = all(
        sum(counts_by_week[w].values()) == sum(1 for h in homes if h[1] == w)
        for w in counts_by_week
    )
    summary = {
        "stage": "metrics",
        "device_weeks": len(device_week_rows),
        "weeks": sorted(counts_by_week),
        "representativeness_rows": len(repr_rows),
        "flagged_over_one": flagged,
        "conservation_ok": conservation_ok,
    }
    write_json(cfg.out_path("summary_metrics.json"), summary)
    return summary


def _class_cells(rows_by_class: dict[str, list[float]], order: list[str]):
    for label in order:
        values = rows_by_class.get(label)
        if values:
            yield label, np.asarray(values, dtype=np.float64)


def run_report(cfg: PipelineConfig) -> dict:
    groups = _load_groups(cfg)
    device_rows = read_csv_rows(cfg.out_path("device_week_metrics.csv"), DEVICE_WEEK_HEADER)
    repr_rows = read_csv_rows(cfg.out_path("representativeness.csv"), REPRESENTATIVENESS_HEADER)
    count_rows = read_csv_rows(cfg.out_path("home_counts.csv"), HOME_COUNTS_HEADER)

    weeks = sorted({int(r[1]) for r in device_rows} | {int(r[0]) for r in repr_rows})
    counts_by_week: dict[int, dict[str, int]] = defaultdict(dict)
    for r in count_rows:
        counts_by_week[int(r[0])][r[1]] = int(r[2])

    # per (week, partition, class, metric) -> values
    pooled: dict[tuple[int, str, str, str], list[float]] = defaultdict(list)
    for r in repr_rows:
        week, race, poverty, p = int(r[0]), r[2], r[3], float(r[6])
        pooled[(week, "race", race, "p")].append(p)
        pooled[(week, "poverty", poverty, "p")].append(p)
    for r in device_rows:
        week, race, poverty = int(r[1]), r[3], r[4]
        if not race:
            continue
        for metric, value in (("q_h", float(r[5])), ("q_sp", float(r[6])), ("mu_hat", float(r[7]))):
            pooled[(week, "race", race, metric)].append(value)
            pooled[(week, "poverty", poverty, metric)].append(value)

    class_rows = []
    test_rows = []
    for week in weeks:
        for partition, order in (("race", _RACE_ORDER), ("poverty", _POVERTY_ORDER)):
            for metric in _METRIC_ORDER:
                cells = {
                    label: pooled.get((week, partition, label, metric), [])
                    for label in order
                }
                for label, values in _class_cells(cells, order):
                    ci = stats.median_ci(values, cfg.ci_level)
                    class_rows.append(
                        (
                            week,
                            partition,
                            label,
                            metric,
                            values.size,
                            ci.median,
                            ci.lo,
                            ci.hi,
                            int(ci.small_sample),
                        )
                    )
                for label_a, label_b in _TEST_PAIRS[partition]:
                    a = cells.get(label_a, [])
                    b = cells.get(label_b, [])
                    if not a or not b:
                        continue
                    result = stats.moods_median_test(a, b)
                    test_rows.append(
                        (
                            week,
                            partition,
                            metric,
                            label_a,
                            label_b,
                            result.statistic,
                            result.p_value,
                            result.stars,
                            result.n_a,
                            result.n_b,
                            int(result.degenerate),
                        )
                    )
    write_csv(cfg.out_path("class_metrics.csv"), CLASS_METRICS_HEADER, class_rows)
    write_csv(cfg.out_path("tests.csv"), TESTS_HEADER, test_rows)

    corr_rows = []
    degenerate_corr = []
    for week in weeks:
        counts = counts_by_week.get(week, {})
        for level in ("block_group", "tract"):
            try:
                result = metrics.census_correlation(counts, groups, level=level)
            except stats.DegenerateVarianceError:
                degenerate_corr.append(f"{week}:{level}")
                continue
            corr_rows.append(
                (week, level, result.n_a, result.statistic, result.p_value, result.stars)
            )
    write_csv(cfg.out_path("correlations.csv"), CORRELATIONS_HEADER, corr_rows)

    choropleth_rows = []
    bg_ids = sorted(g.id for g in groups)
    for week in weeks:
        counts = counts_by_week.get(week, {})
        values = np.array([counts.get(gid, 0) for gid in bg_ids], dtype=np.float64)
        _, bins = metrics.quantile_bins(values, cfg.quantile_bins)
        for gid, x, b in zip(bg_ids, values, bins):
            choropleth_rows.append((week, gid, int(x), int(b)))
    write_csv(cfg.out_path("choropleth.csv"), CHOROPLETH_HEADER, choropleth_rows)

    summary = {
        "stage": "report",
        "weeks": weeks,
        "class_metric_rows": len(class_rows),
        "test_rows": len(test_rows),
        "correlation_rows": len(corr_rows),
        "degenerate_correlations": degenerate_corr,
    }
    write_json(cfg.out_path("summary_report.json"), summary)
    return summary


_STAGES = {
    "validate": run_validate,
    "staypoints": run_staypoints,
    "homes": run_homes,
    "metrics": run_metrics,
    "report": run_report,
    "synth": run_synth,
}


def run_stage(name: str, cfg: PipelineConfig) -> dict:
    if name == "all":
        return run_all(cfg)
    return _STAGES[name](cfg)


def run_all(cfg: PipelineConfig) -> dict:
    summaries = {}
    for name in ("validate", "staypoints", "homes", "metrics", "report"):
        summaries[name] = _STAGES[name](cfg)
    summary = {"stage": "all", "stages": summaries}
    write_json(cfg.out_path("summary_all.json"), summary)
    return summary
