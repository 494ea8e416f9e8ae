import io

import numpy as np
import pytest

from mobequity.geo import MalformedWKTError
from mobequity.ingest import (
    DuplicateIdError,
    MalformedRowError,
    MissingHeaderError,
    PingRecord,
    PovertyClass,
    RaceClass,
    classify,
    load_block_groups,
    parse_pings,
    parse_pings_columnar,
    partition_by_device,
    sort_columns_by_device,
)

HEADER = "device_id,lat,lon,t,precision_m\n"

BG_HEADER = "id,wkt,pop_total,pop_white,pop_black,pop_hispanic,poverty_share\n"
BG_ROW = '48201000{n:03d}0,"POLYGON(({lon} 29.0,{lon2} 29.0,{lon2} 29.1,{lon} 29.1,{lon} 29.0))",{pop},{w},{b},{h},{pov}\n'


def bg_row(n, pop, w, b, h, pov, lon=None):
    lon = -95.0 + 0.2 * n if lon is None else lon
    return BG_ROW.format(n=n, lon=lon, lon2=lon + 0.1, pop=pop, w=w, b=b, h=h, pov=pov)


class TestParsePings:
    def test_direct_field_mapping(self):
        records, report = parse_pings(io.StringIO(HEADER + "d1,29.76,-95.37,1501545600,12.5\n"))
        assert records == [PingRecord("d1", 29.76, -95.37, 1501545600, 12.5)]
        assert report.n_rejected == 0

    def test_out_of_range_latitude(self):
        records, report = parse_pings(io.StringIO(HEADER + "d1,95.0,-95.37,1501545600,12.5\n"))
        assert records == []
        assert report.counts == {"lat_out_of_range": 1}

    def test_rejection_reasons(self):
        lines = [
            "d1,29.0,-95.0,100,5.0",  # ok
            "d1,29.0",  # field count
            ",29.0,-95.0,100,5.0",  # empty device
            "d1,abc,-95.0,100,5.0",  # bad number
            "d1,nan,-95.0,100,5.0",  # nonfinite
            "d1,29.0,-185.0,100,5.0",  # lon range
            "d1,29.0,-95.0,100,0.0",  # precision
            "d1,29.0,-95.0,99999,5.0",  # out of window
        ]
        _, report = parse_pings(
            io.StringIO(HEADER + "\n".join(lines) + "\n"), t_min=0, t_max=1000
        )
        assert report.counts == {
            "bad_field_count": 1,
            "empty_device_id": 1,
            "unparseable_number": 1,
            "nonfinite_value": 1,
            "lon_out_of_range": 1,
            "nonpositive_precision": 1,
            "t_out_of_window": 1,
        }
        assert report.n_accepted == 1

    def test_parse_is_total(self):
        # every line is either a record or a categorized rejection
        rng = np.random.default_rng(3)
        lines = []
        for i in range(500):
            if rng.random() < 0.3:
                lines.append(rng.choice(["garbage", "a,b,c,d,e", "d,1,2,3", ",1,2,3,4"]))
            else:
                lines.append(f"d{i % 7},{rng.uniform(-90, 90)},{rng.uniform(-180, 180)},{i},{rng.uniform(0.1, 30)}")
        _, report = parse_pings(io.StringIO(HEADER + "\n".join(lines) + "\n"))
        assert report.n_accepted + report.n_rejected == report.n_lines == 500

    def test_empty_file_is_zero_records(self):
        records, report = parse_pings(io.StringIO(""))
        assert records == [] and report.n_lines == 0

    def test_missing_header(self):
        with pytest.raises(MissingHeaderError):
            parse_pings(io.StringIO("d1,29.0,-95.0,100,5.0\n"))

    @pytest.mark.parametrize("corrupt", [False, True])
    def test_fast_path_matches_line_parser(self, tmp_path, corrupt):
        # files on disk may take the vectorized path; it must agree with
        # the line-by-line parser on accepted values and reject counts
        rng = np.random.default_rng(55)
        lines = [HEADER.rstrip("\n")]
        for i in range(2000):
            if corrupt and rng.random() < 0.05:
                lines.append(rng.choice(["bad,row", "d,x,0,1,2", "", "d,1,2,3,4,5"]))
            elif rng.random() < 0.1:
                lines.append(f"d{i % 9},{rng.uniform(-95, 95)},{rng.uniform(-185, 185)},{i},{rng.uniform(-1, 5)}")
            else:
                lines.append(f"d{i % 9},{rng.uniform(-90, 90)},{rng.uniform(-180, 180)},{i},{rng.uniform(0.1, 30)}")
        path = tmp_path / "pings.csv"
        path.write_text("\n".join(lines) + "\n")
        fast_cols, fast_report = parse_pings_columnar(str(path), t_min=100, t_max=1900)
        with open(path) as f:
            slow_cols, slow_report = parse_pings_columnar(f, t_min=100, t_max=1900)
        assert fast_report.n_lines == slow_report.n_lines
        assert fast_report.n_accepted == slow_report.n_accepted
        assert fast_report.counts == slow_report.counts
        assert fast_cols.device_id.tolist() == slow_cols.device_id.tolist()
        assert np.array_equal(fast_cols.lat, slow_cols.lat)
        assert np.array_equal(fast_cols.t, slow_cols.t)
        assert np.array_equal(fast_cols.precision_m, slow_cols.precision_m)

    def test_columnar_equals_records(self):
        text = HEADER + "".join(
            f"d{i % 3},{29 + i * 0.001},{-95 - i * 0.001},{1000 + i},{1 + i}\n" for i in range(50)
        )
        records, _ = parse_pings(io.StringIO(text))
        cols, _ = parse_pings_columnar(io.StringIO(text))
        assert len(cols) == len(records) == 50
        for rec, d, la, lo, t, p in zip(
            records, cols.device_id, cols.lat, cols.lon, cols.t, cols.precision_m
        ):
            assert rec == PingRecord(str(d), float(la), float(lo), int(t), float(p))


class TestClassify:
    def test_majority_white_nonpoor(self):
        c = classify(1000, 600, 200, 200, 0.1)
        assert c.race == RaceClass.MAJORITY_WHITE and c.poverty == PovertyClass.NONPOOR

    def test_no_majority_poor(self):
        c = classify(1000, 400, 350, 250, 0.45)
        assert c.race == RaceClass.NO_MAJORITY and c.poverty == PovertyClass.POOR

    def test_exactly_half_is_not_a_majority(self):
        assert classify(1000, 500, 300, 200, 0.1).race == RaceClass.NO_MAJORITY

    def test_exactly_point_three_is_nonpoor(self):
        assert classify(1000, 600, 200, 200, 0.3).poverty == PovertyClass.NONPOOR

    def test_zero_population_unclassifiable(self):
        assert classify(0, 0, 0, 0, 0.0) is None


class TestLoadBlockGroups:
    def test_loads_and_classifies(self):
        text = BG_HEADER + bg_row(0, 1000, 600, 200, 200, 0.1) + bg_row(1, 1000, 200, 600, 200, 0.4)
        groups = load_block_groups(io.StringIO(text))
        assert [g.classification.race for g in groups] == [
            RaceClass.MAJORITY_WHITE,
            RaceClass.MAJORITY_BLACK,
        ]
        assert groups[0].tract_id == "48201000000"

    def test_zero_population_flagged(self):
        groups = load_block_groups(io.StringIO(BG_HEADER + bg_row(0, 0, 0, 0, 0, 0.0)))
        assert groups[0].classification is None

    def test_duplicate_id(self):
        text = BG_HEADER + bg_row(0, 10, 1, 1, 1, 0.1) + bg_row(0, 10, 1, 1, 1, 0.1, lon=-94.0)
        with pytest.raises(DuplicateIdError):
            load_block_groups(io.StringIO(text))

    def test_malformed_wkt(self):
        text = BG_HEADER + '482010000001,"POLYGON((0 0, 1 1))",10,1,1,1,0.1\n'
        with pytest.raises(MalformedWKTError):
            load_block_groups(io.StringIO(text))

    def test_race_counts_exceeding_population(self):
        with pytest.raises(MalformedRowError):
            load_block_groups(io.StringIO(BG_HEADER + bg_row(0, 100, 60, 60, 60, 0.1)))

    def test_bad_geoid_length(self):
        text = BG_HEADER + 'short,"POLYGON((0 0,1 0,1 1,0 1,0 0))",10,1,1,1,0.1\n'
        with pytest.raises(MalformedRowError):
            load_block_groups(io.StringIO(text))


class TestPartition:
    def test_interleaved_devices(self):
        pings = [
            PingRecord("b", 0, 0, 30, 1),
            PingRecord("a", 0, 0, 20, 1),
            PingRecord("b", 0, 0, 10, 1),
            PingRecord("a", 0, 0, 5, 1),
            PingRecord("c", 0, 0, 1, 1),
        ]
        parts = partition_by_device(pings)
        assert sorted(parts) == ["a", "b", "c"]
        assert [p.t for p in parts["a"]] == [5, 20]
        assert [p.t for p in parts["b"]] == [10, 30]

    def test_empty(self):
        assert partition_by_device([]) == {}

    def test_stable_on_time_ties(self):
        pings = [
            PingRecord("a", 1.0, 0, 10, 1),
            PingRecord("a", 2.0, 0, 10, 1),
            PingRecord("a", 3.0, 0, 5, 1),
        ]
        parts = partition_by_device(pings)
        assert [p.lat for p in parts["a"]] == [3.0, 1.0, 2.0]

    def test_multiset_preserved(self):
        rng = np.random.default_rng(4)
        pings = [
            PingRecord(f"d{rng.integers(5)}", float(rng.normal()), 0.0, int(rng.integers(100)), 1.0)
            for _ in range(300)
        ]
        parts = partition_by_device(pings)
        flattened = [p for lst in parts.values() for p in lst]
        assert sorted(map(repr, flattened)) == sorted(map(repr, pings))

    def test_columnar_sort_matches_partition(self):
        text = HEADER + "".join(
            f"d{i % 4},{29 + (i % 13) * 0.01},-95.0,{1000 - i},{1 + i % 5}\n" for i in range(100)
        )
        records, _ = parse_pings(io.StringIO(text))
        cols, _ = parse_pings_columnar(io.StringIO(text))
        sorted_cols, devices, bounds = sort_columns_by_device(cols)
        parts = partition_by_device(records)
        assert list(devices) == sorted(parts)
        for i, device in enumerate(devices):
            lo, hi = int(bounds[i]), int(bounds[i + 1])
            assert [int(t) for t in sorted_cols.t[lo:hi]] == [p.t for p in parts[str(device)]]
