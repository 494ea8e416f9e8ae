"""Pipeline configuration: flat key=value files with environment overrides.

Precedence, lowest to highest: built-in defaults, the config file,
``MOBEQUITY_<UPPER_KEY>`` environment variables, explicit CLI overrides.
Unknown keys are errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional

from .synth import InvalidConfigError, SynthClass, SynthConfig
from .timeutil import StudyWindow

ENV_PREFIX = "MOBEQUITY_"


@dataclass(frozen=True)
class PipelineConfig:
    pings_path: str = "pings.csv"
    block_groups_path: str = "block_groups.csv"
    output_dir: str = "out"
    study_start: str = "2017-07-31"
    weeks: int = 9
    tz_offset_hours: float = -5.0
    staypoint_min_duration_s: float = 900.0
    staypoint_max_distance_m: float = 50.0
    cluster_max_diameter_m: float = 50.0
    night_start_hour: int = 21
    night_end_hour: int = 6
    majority_threshold: float = 0.5
    poverty_threshold: float = 0.3
    ci_level: float = 0.95
    grid_cell_deg: float = 0.01
    quantile_bins: int = 8
    workers: int = 1
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        if self.weeks < 1:
            raise InvalidConfigError("weeks must be >= 1")
        for name in (
            "staypoint_min_duration_s",
            "staypoint_max_distance_m",
            "cluster_max_diameter_m",
            "majority_threshold",
            "poverty_threshold",
            "grid_cell_deg",
        ):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if not 0.0 < self.ci_level < 1.0:
            raise InvalidConfigError("ci_level must be in (0, 1)")
        if not (0 <= self.night_start_hour <= 23 and 0 <= self.night_end_hour <= 23):
            raise InvalidConfigError("night hours must be in 0..23")
        if self.quantile_bins < 1:
            raise InvalidConfigError("quantile_bins must be >= 1")
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")
        try:
            self.study_window()
        except ValueError as exc:
            raise InvalidConfigError(str(exc)) from exc
        self.synth.validate()

    def study_window(self) -> StudyWindow:
        return StudyWindow.create(self.study_start, self.weeks, self.tz_offset_hours)

    def out_path(self, name: str) -> Path:
        return Path(self.output_dir) / name


_INT_KEYS = {
    "weeks",
    "night_start_hour",
    "night_end_hour",
    "quantile_bins",
    "workers",
}
_FLOAT_KEYS = {
    "tz_offset_hours",
    "staypoint_min_duration_s",
    "staypoint_max_distance_m",
    "cluster_max_diameter_m",
    "majority_threshold",
    "poverty_threshold",
    "ci_level",
    "grid_cell_deg",
}
_STR_KEYS = {"pings_path", "block_groups_path", "output_dir", "study_start"}

_SYNTH_INT_KEYS = {
    "synth_seed": "seed",
    "synth_min_day_anchors": "min_day_anchors",
    "synth_max_day_anchors": "max_day_anchors",
    "synth_day_visit_duration_s": "day_visit_duration_s",
    "synth_corrupt_lines": "corrupt_lines",
}
_SYNTH_FLOAT_KEYS = {
    "synth_pop_spread": "pop_spread",
    "synth_mean_ping_interval_s": "mean_ping_interval_s",
    "synth_noise_sigma_m": "noise_sigma_m",
    "synth_precision_median_m": "precision_median_m",
    "synth_precision_log_sigma": "precision_log_sigma",
    "synth_contraction": "contraction",
    "synth_precision_inflation": "precision_inflation",
    "synth_dropout": "dropout",
    "synth_rule_violator_fraction": "rule_violator_fraction",
    "synth_cell_deg": "cell_deg",
    "synth_origin_lat": "origin_lat",
    "synth_origin_lon": "origin_lon",
}

KNOWN_KEYS = (
    _INT_KEYS
    | _FLOAT_KEYS
    | _STR_KEYS
    | set(_SYNTH_INT_KEYS)
    | set(_SYNTH_FLOAT_KEYS)
    | {"synth_classes", "synth_disruption_weeks"}
)


def parse_classes(text: str) -> tuple[SynthClass, ...]:
    """Parse "name:n_bgs:pop:rate:poor|nonpoor" class specs, comma-separated."""
    classes = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 5 or parts[4] not in ("poor", "nonpoor"):
            raise InvalidConfigError(f"bad class spec {chunk.strip()!r}")
        try:
            classes.append(
                SynthClass(
                    name=parts[0],
                    n_block_groups=int(parts[1]),
                    population=int(parts[2]),
                    ownership_rate=float(parts[3]),
                    poor=parts[4] == "poor",
                )
            )
        except ValueError as exc:
            raise InvalidConfigError(f"bad class spec {chunk.strip()!r}: {exc}") from exc
    return tuple(classes)


def _parse_value(key: str, raw: str, data: dict, synth_data: dict) -> None:
    try:
        if key in _INT_KEYS:
            data[key] = int(raw)
        elif key in _FLOAT_KEYS:
            data[key] = float(raw)
        elif key in _STR_KEYS:
            data[key] = raw
        elif key in _SYNTH_INT_KEYS:
            synth_data[_SYNTH_INT_KEYS[key]] = int(raw)
        elif key in _SYNTH_FLOAT_KEYS:
            synth_data[_SYNTH_FLOAT_KEYS[key]] = float(raw)
        elif key == "synth_classes":
            synth_data["classes"] = parse_classes(raw)
        elif key == "synth_disruption_weeks":
            synth_data["disruption_weeks"] = (
                tuple(int(w) for w in raw.split(",") if w.strip()) if raw.strip() else ()
            )
        else:
            raise InvalidConfigError(f"unknown configuration key {key!r}")
    except ValueError as exc:
        raise InvalidConfigError(f"bad value for {key!r}: {raw!r}") from exc


def load_config(
    path: Optional[str] = None,
    *,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    data: dict = {}
    synth_data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidConfigError(f"cannot read config file {path!r}: {exc}") from exc
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            _parse_value(key.strip(), raw.strip(), data, synth_data)
    env = os.environ if env is None else env
    for key in sorted(KNOWN_KEYS):
        env_val = env.get(ENV_PREFIX + key.upper())
        if env_val is not None:
            _parse_value(key, env_val, data, synth_data)
    if overrides:
        for key, raw in overrides.items():
            _parse_value(key, str(raw), data, synth_data)

    # the generator shares the study calendar with the pipeline
    synth_base = dict(
        study_start=data.get("study_start", PipelineConfig.study_start),
        weeks=data.get("weeks", PipelineConfig.weeks),
        tz_offset_hours=data.get("tz_offset_hours", PipelineConfig.tz_offset_hours),
        night_start_hour=data.get("night_start_hour", PipelineConfig.night_start_hour),
        night_end_hour=data.get("night_end_hour", PipelineConfig.night_end_hour),
    )
    synth_base.update(synth_data)
    cfg = PipelineConfig(**data, synth=SynthConfig(**synth_base))
    cfg.validate()
    return cfg
