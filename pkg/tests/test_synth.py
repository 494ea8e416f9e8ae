import hashlib
from pathlib import Path

import numpy as np
import pytest

from mobequity.config import PipelineConfig
from mobequity.fileio import read_csv_rows
from mobequity import pipeline
from mobequity.ingest import parse_pings_columnar
from mobequity.synth import (
    InvalidConfigError,
    Stream,
    SynthClass,
    SynthConfig,
    build_schedule,
    derive_key,
    generate,
    load_manifest,
    perturb_timeline,
    splitmix64,
    stream,
)
from mobequity.timeutil import SECONDS_PER_WEEK, StudyWindow

SMALL = SynthConfig(
    seed=11,
    weeks=1,
    classes=(
        SynthClass("white", 4, 120, 0.1),
        SynthClass("black", 4, 120, 0.1, poor=True),
    ),
    mean_ping_interval_s=900.0,
    max_day_anchors=2,
)


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestStreams:
    def test_splitmix_known_relation(self):
        # scalar and vectorized mixers agree
        s = stream(123, 7)
        vals = s.uniforms(64)
        assert np.all((vals >= 0) & (vals < 1))
        again = stream(123, 7).uniforms(64)
        assert np.array_equal(vals, again)

    def test_distinct_labels_distinct_streams(self):
        a = stream(5, 1).uniforms(8)
        b = stream(5, 2).uniforms(8)
        assert not np.array_equal(a, b)

    def test_scalar_vs_array_mixing(self):
        key = derive_key(99, 3, 4)
        s = Stream(key)
        arr = s.uniforms(4)
        # reproduce by hand from the documented recurrence
        from mobequity.synth import MASK64, SM_GAMMA, _mix_array

        raw = [
            _mix_array(np.array([(key + i * SM_GAMMA) & MASK64], dtype=np.uint64))[0]
            for i in range(1, 5)
        ]
        want = np.array([(int(r) >> 11) * 2.0**-53 for r in raw])
        assert np.array_equal(arr, want)

    def test_normals_moments(self):
        z = stream(1, 2, 3).normals(40_000)
        assert abs(float(z.mean())) < 0.02
        assert abs(float(z.std()) - 1.0) < 0.02

    def test_binomial(self):
        s = stream(77, 1)
        assert s.binomial(0, 0.5) == 0
        assert s.binomial(100, 0.0) == 0
        assert s.binomial(100, 1.0) == 100
        draws = [stream(77, 2, i).binomial(1000, 0.3) for i in range(50)]
        assert abs(np.mean(draws) - 300) < 15


class TestConfigValidation:
    def test_bad_rate(self):
        cfg = SynthConfig(classes=(SynthClass("white", 2, 100, 1.5),))
        with pytest.raises(InvalidConfigError):
            cfg.validate()

    def test_contraction_too_low_for_anchor_count(self):
        cfg = SynthConfig(min_day_anchors=1, contraction=0.4, disruption_weeks=(1,))
        with pytest.raises(InvalidConfigError):
            cfg.validate()

    def test_unknown_class_name(self):
        cfg = SynthConfig(classes=(SynthClass("martian", 2, 100, 0.1),))
        with pytest.raises(InvalidConfigError):
            cfg.validate()

    def test_disruption_week_out_of_range(self):
        cfg = SynthConfig(weeks=2, disruption_weeks=(5,))
        with pytest.raises(InvalidConfigError):
            cfg.validate()


class TestGenerate:
    def test_byte_identical_for_same_seed(self, tmp_path):
        generate(SMALL, tmp_path / "a")
        generate(SMALL, tmp_path / "b")
        for name in (
            "pings.csv",
            "block_groups.csv",
            "manifest_devices.csv",
            "manifest_classes.csv",
            "manifest_weeks.csv",
        ):
            assert file_hash(tmp_path / "a" / name) == file_hash(tmp_path / "b" / name)

    def test_different_seed_differs(self, tmp_path):
        generate(SMALL, tmp_path / "a")
        import dataclasses

        generate(dataclasses.replace(SMALL, seed=12), tmp_path / "c")
        assert file_hash(tmp_path / "a" / "pings.csv") != file_hash(tmp_path / "c" / "pings.csv")

    def test_manifest_conservation(self, tmp_path):
        manifest = generate(SMALL, tmp_path)
        assert sum(c.n_devices for c in manifest.classes) == len(manifest.devices)
        reloaded = load_manifest(tmp_path)
        assert len(reloaded.devices) == len(manifest.devices)

    def test_per_device_ping_counts_match_manifest(self, tmp_path):
        manifest = generate(SMALL, tmp_path)
        cols, report = parse_pings_columnar(tmp_path / "pings.csv")
        assert report.n_rejected == 0
        ids, counts = np.unique(cols.device_id, return_counts=True)
        observed = dict(zip((str(i) for i in ids), (int(c) for c in counts)))
        for truth in manifest.devices:
            assert observed.get(truth.device_id, 0) == truth.n_pings

    def test_corrupt_lines_planted_and_rejected(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(SMALL, corrupt_lines=37)
        generate(cfg, tmp_path)
        window = StudyWindow.create(cfg.study_start, cfg.weeks, cfg.tz_offset_hours)
        cols, report = parse_pings_columnar(
            tmp_path / "pings.csv", t_min=window.t_min, t_max=window.t_max
        )
        assert report.n_rejected == 37
        assert report.n_accepted == report.n_lines - 37

    def test_schema_matches_ingest(self, tmp_path):
        generate(SMALL, tmp_path)
        window = StudyWindow.create(SMALL.study_start, SMALL.weeks, SMALL.tz_offset_hours)
        cols, report = parse_pings_columnar(
            tmp_path / "pings.csv", t_min=window.t_min, t_max=window.t_max
        )
        assert report.n_rejected == 0
        assert len(cols) > 0


class TestPerturb:
    def test_identity_perturbation(self, tmp_path):
        import dataclasses

        base = dataclasses.replace(SMALL, disruption_weeks=(1,), contraction=1.0,
                                   precision_inflation=1.0, dropout=0.0)
        generate(SMALL, tmp_path / "plain")
        generate(base, tmp_path / "identity")
        assert file_hash(tmp_path / "plain" / "pings.csv") == file_hash(
            tmp_path / "identity" / "pings.csv"
        )

    def test_full_dropout_empties_window(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(
            SMALL, weeks=2, disruption_weeks=(2,), dropout=1.0
        )
        generate(cfg, tmp_path)
        window = StudyWindow.create(cfg.study_start, cfg.weeks, cfg.tz_offset_hours)
        cols, _ = parse_pings_columnar(tmp_path / "pings.csv")
        rel = cols.t - window.start_epoch
        weeks = rel // SECONDS_PER_WEEK + 1
        assert int(np.count_nonzero(weeks == 2)) == 0
        assert int(np.count_nonzero(weeks == 1)) > 0

    def test_precision_inflation_scales_window_median(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(
            SMALL, weeks=2, disruption_weeks=(2,), precision_inflation=1.5
        )
        generate(cfg, tmp_path)
        window = StudyWindow.create(cfg.study_start, cfg.weeks, cfg.tz_offset_hours)
        cols, _ = parse_pings_columnar(tmp_path / "pings.csv")
        rel = cols.t - window.start_epoch
        weeks = rel // SECONDS_PER_WEEK + 1
        base_median = float(np.median(cols.precision_m[weeks == 1]))
        hit_median = float(np.median(cols.precision_m[weeks == 2]))
        assert base_median == pytest.approx(cfg.precision_median_m, rel=0.05)
        assert hit_median == pytest.approx(1.5 * base_median, rel=0.05)

    def test_thinning_preserves_nights(self):
        import dataclasses

        cfg = dataclasses.replace(
            SMALL, weeks=2, disruption_weeks=(2,), contraction=0.6, min_day_anchors=2
        )
        from mobequity.synth import _layout_block_groups, _plant_devices

        bgs = _layout_block_groups(cfg)
        devices = _plant_devices(cfg, bgs)
        schedule = build_schedule(cfg, devices[0])
        thinned = perturb_timeline(schedule, cfg)
        nights = lambda visits, week: sum(
            1 for v in visits if v.is_night and v.start_rel // SECONDS_PER_WEEK + 1 == week
        )
        days = lambda visits, week: sum(
            1 for v in visits if not v.is_night and v.start_rel // SECONDS_PER_WEEK + 1 == week
        )
        assert nights(thinned.visits, 2) == nights(schedule.visits, 2)
        assert days(thinned.visits, 2) <= days(schedule.visits, 2)
        assert days(thinned.visits, 1) == days(schedule.visits, 1)


class TestEndToEndRecovery:
    def test_noise_free_recovery_is_exact(self, tmp_path):
        import dataclasses

        cfg = dataclasses.replace(SMALL, noise_sigma_m=0.0, rule_violator_fraction=0.15)
        pcfg = PipelineConfig(
            pings_path=str(tmp_path / "pings.csv"),
            block_groups_path=str(tmp_path / "block_groups.csv"),
            output_dir=str(tmp_path),
            weeks=1,
            synth=cfg,
        )
        manifest = generate(cfg, tmp_path)
        pipeline.run_staypoints(pcfg)
        pipeline.run_homes(pcfg)
        homes = {
            r[0]: r[2] for r in read_csv_rows(tmp_path / "homes.csv", pipeline.HOMES_HEADER)
        }
        satisfying = [t for t in manifest.devices if not t.rule_violation]
        assert satisfying
        assert all(homes.get(t.device_id) == t.block_group_id for t in satisfying)
        violators = [t for t in manifest.devices if t.rule_violation]
        assert violators
        assert not any(t.device_id in homes for t in violators)
