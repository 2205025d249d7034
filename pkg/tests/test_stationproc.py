import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import natural_spline_coeffs, natural_spline_eval
from m3r.errors import FormatError, NegativeSpeed, TooFewKnots
from m3r.stationproc import (
    PRECIP,
    VARIABLES,
    StationSeries,
    format_iso,
    parse_iso,
    precip_contextual_fill,
    process_station,
    read_station_csv,
    spline_fill,
    validate_physical,
    wind_decompose,
    wind_fill,
    wind_reconstitute,
    write_station_csv,
)


def blank_series(n=10, step=300, t0=1_717_200_000):
    ts = t0 + step * np.arange(n)
    cols = {v: np.zeros(n) for v in VARIABLES}
    for name in ("temp", "humidity", "dewpoint"):
        cols[f"{name}_max"][:] = 3.0
        cols[f"{name}_avg"][:] = 2.0
        cols[f"{name}_min"][:] = 1.0
    cols["pressure_max"][:] = 30.0
    cols["pressure_min"][:] = 29.9
    return StationSeries(ts, cols)


def one_sided_slopes(f, t, h=1.0):
    """Exact derivative of a cubic from four samples on each side of ``t``."""
    left = (11 * f(t) - 18 * f(t - h) + 9 * f(t - 2 * h) - 2 * f(t - 3 * h)) / (6 * h)
    right = (-11 * f(t) + 18 * f(t + h) - 9 * f(t + 2 * h) + 2 * f(t + 3 * h)) / (6 * h)
    return left, right


class TestSplineFill:
    def test_knots_unchanged(self):
        ts = np.arange(6) * 300
        v = np.array([1.0, np.nan, 3.0, np.nan, 2.0, 5.0])
        out = spline_fill(ts, v)
        present = ~np.isnan(v)
        assert np.array_equal(out[present], v[present])

    def test_two_knots_is_linear(self):
        out = spline_fill([0, 100, 200], [0.0, np.nan, 10.0])
        assert out[1] == pytest.approx(5.0, abs=1e-12)

    def test_linear_data_reproduced(self):
        ts = np.arange(12) * 60.0
        v = 0.5 * ts + 2
        gappy = v.copy()
        gappy[[1, 4, 5, 9]] = np.nan
        assert np.allclose(spline_fill(ts, gappy), v, atol=1e-9)

    def test_constant_extrapolation(self):
        out = spline_fill([0, 1, 2, 3, 4], [np.nan, 2.0, 4.0, 3.0, np.nan])
        assert out[0] == 2.0 and out[-1] == 3.0

    def test_too_few_knots(self):
        with pytest.raises(TooFewKnots):
            spline_fill([0, 1, 2], [np.nan, 1.0, np.nan])

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_tridiagonal_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 40
        ts = np.cumsum(rng.integers(60, 900, n)).astype(float)
        v = np.sin(ts / 3000) * 10 + rng.normal(0, 1, n)
        gappy = v.copy()
        gappy[rng.random(n) < 0.4] = np.nan
        gappy[[0, -1]] = v[[0, -1]]
        present = ~np.isnan(gappy)
        kx, ky = list(ts[present]), list(gappy[present])
        M = natural_spline_coeffs(kx, ky)
        out = spline_fill(ts, gappy)
        for k in np.flatnonzero(~present):
            assert out[k] == pytest.approx(natural_spline_eval(kx, ky, M, ts[k]), rel=1e-9, abs=1e-9)

    def test_first_derivative_continuous_at_interior_knots(self):
        knots = np.array([0.0, 700, 1500, 2600, 3300, 4800])
        vals = np.array([2.0, -1.0, 4.0, 0.5, 3.0, 1.0])

        for k in range(1, len(knots) - 1):
            offsets = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
            ts = np.sort(np.concatenate([knots, knots[k] + offsets]))
            vv = np.full(ts.size, np.nan)
            vv[np.isin(ts, knots)] = vals
            out = spline_fill(ts, vv)
            lookup = dict(zip(ts, out))
            left, right = one_sided_slopes(lambda t: lookup[t], knots[k])
            assert abs(left - right) <= 1e-6 * max(abs(left), abs(right), 1e-12)


class TestWind:
    def test_decompose_example(self):
        u, v = wind_decompose(10.0, 90.0)
        assert u == pytest.approx(-10.0) and v == pytest.approx(0.0, abs=1e-12)

    def test_north_wind_blows_south(self):
        u, v = wind_decompose(5.0, 0.0)
        assert u == pytest.approx(0.0, abs=1e-12) and v == pytest.approx(-5.0)

    def test_calm(self):
        assert wind_reconstitute(0.0, 0.0) == (0.0, 0.0)

    def test_negative_speed(self):
        with pytest.raises(NegativeSpeed):
            wind_decompose(-1.0, 10.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 150), st.floats(0, 359.999))
    def test_round_trip(self, speed, direction):
        s, d = wind_reconstitute(*wind_decompose(speed, direction))
        assert abs(s - speed) <= 1e-9 * max(1.0, speed)
        diff = (d - direction + 180) % 360 - 180
        assert abs(diff) <= 1e-9 * 360

    def test_wraparound_fills_near_north(self):
        s = blank_series(3)
        s.columns["wind_speed_avg"][:] = [5.0, np.nan, 5.0]
        s.columns["wind_dir_avg"][:] = [350.0, np.nan, 10.0]
        out = wind_fill(s)
        d = out.columns["wind_dir_avg"][1]
        assert min(d, 360 - d) < 5.0
        assert out.columns["wind_speed_avg"][1] > 0


class TestPrecipFill:
    def test_dry_context_is_exact_zero(self):
        s = blank_series(30)
        s.columns[PRECIP][10:15] = np.nan
        out = precip_contextual_fill(s)
        assert np.all(out.columns[PRECIP][10:15] == 0.0)

    def test_active_context_interpolates(self):
        s = blank_series(10)
        s.columns[PRECIP][:] = [0, 0, 0, 2.0, np.nan, 4.0, 0, 0, 0, 0]
        out = precip_contextual_fill(s)
        assert out.columns[PRECIP][4] == pytest.approx(3.0)

    def test_rain_beyond_window_ignored(self):
        # rain 3 h before the gap is outside the 1.25 h half window
        s = blank_series(40, step=600)
        s.columns[PRECIP][0] = 5.0
        s.columns[PRECIP][19:21] = np.nan
        out = precip_contextual_fill(s)
        assert np.all(out.columns[PRECIP][19:21] == 0.0)

    def test_window_edge_inclusive(self):
        s = blank_series(20, step=900)
        s.columns[PRECIP][0] = 1.0
        s.columns[PRECIP][1:7] = np.nan
        out = precip_contextual_fill(s).columns[PRECIP]
        # 4500 s from the wet sample: active, interpolated between 1.0 at 0 s and 0.0 at 6300 s
        assert out[5] == pytest.approx(1.0 - 4500 / 6300)
        assert out[6] == 0.0  # 5400 s: outside the half window

    def test_fill_nonnegative(self):
        rng = np.random.default_rng(0)
        s = blank_series(200)
        r = np.maximum(rng.normal(0, 2, 200), 0)
        r[rng.random(200) < 0.3] = np.nan
        s.columns[PRECIP][:] = r
        out = precip_contextual_fill(s)
        assert np.all(out.columns[PRECIP] >= 0) and not np.isnan(out.columns[PRECIP]).any()


class TestValidate:
    def test_clean_series_passes(self):
        _, report = validate_physical(blank_series())
        assert len(report) == 0

    def test_triple_reordered(self):
        s = blank_series(2)
        s.columns["temp_max"][0] = 0.5  # below avg and min
        out, report = validate_physical(s, repair=True)
        assert len(report) == 1
        trip = [out.columns[f"temp_{k}"][0] for k in ("max", "avg", "min")]
        assert trip == [2.0, 1.0, 0.5]

    def test_gust_raised_to_speed(self):
        s = blank_series(2)
        s.columns["wind_speed_avg"][1] = 7.0
        s.columns["wind_gust_avg"][1] = 3.0
        out, report = validate_physical(s, repair=True)
        assert out.columns["wind_gust_avg"][1] == 7.0
        assert any("wind_gust_avg" in v.rule for v in report.violations)

    def test_report_without_repair_keeps_values(self):
        s = blank_series(2)
        s.columns["humidity_max"][0] = 104.0
        out, report = validate_physical(s, repair=False)
        assert out.columns["humidity_max"][0] == 104.0 and len(report) == 1

    def test_direction_and_precip(self):
        s = blank_series(2)
        s.columns["wind_dir_avg"][0] = 370.0
        s.columns[PRECIP][1] = -0.2
        out, report = validate_physical(s, repair=True)
        assert out.columns["wind_dir_avg"][0] == pytest.approx(10.0)
        assert out.columns[PRECIP][1] == 0.0
        assert len(report) == 2
        assert "row 0" in report.to_text()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_repaired_series_is_clean(self, seed):
        rng = np.random.default_rng(seed)
        s = blank_series(20)
        for v in VARIABLES:
            s.columns[v][:] = rng.normal(20, 40, 20)
        out, _ = validate_physical(s, repair=True)
        _, again = validate_physical(out)
        assert len(again) == 0


def test_process_station_leaves_no_gaps():
    rng = np.random.default_rng(4)
    s = blank_series(100)
    for v in VARIABLES:
        s.columns[v][:] = np.abs(rng.normal(10, 2, 100))
    s.columns["wind_dir_avg"][:] = rng.uniform(0, 359, 100)
    for v in VARIABLES:
        s.columns[v][rng.random(100) < 0.1] = np.nan
    out, _ = process_station(s)
    assert not np.isnan(out.matrix()).any()
    _, report = validate_physical(out)
    assert len(report) == 0


class TestCsv:
    def test_iso(self):
        assert parse_iso("2024-06-01T00:00:00Z") == 1717200000
        assert format_iso(1717200000) == "2024-06-01T00:00:00Z"
        assert parse_iso("2024-06-01T01:00:00+01:00") == 1717200000

    def test_round_trip_with_gaps(self, tmp_path):
        s = blank_series(5)
        s.columns["temp_avg"][2] = np.nan
        s.columns[PRECIP][:] = [0.1, 0.2, 1 / 3, 0.0, 12.5]
        write_station_csv(tmp_path / "p.csv", s)
        back = read_station_csv(tmp_path / "p.csv")
        assert np.array_equal(back.timestamps, s.timestamps)
        assert np.array_equal(back.matrix(), s.matrix(), equal_nan=True)

    def test_header_mismatch(self, tmp_path):
        (tmp_path / "p.csv").write_text("ts_utc,temp\n2024-06-01T00:00:00Z,1\n")
        with pytest.raises(FormatError, match=":1:"):
            read_station_csv(tmp_path / "p.csv")

    def test_bad_row_reports_line(self, tmp_path):
        write_station_csv(tmp_path / "p.csv", blank_series(3))
        lines = (tmp_path / "p.csv").read_text().splitlines()
        lines[2] = lines[2].replace("3.0", "abc", 1)
        (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match=":3:"):
            read_station_csv(tmp_path / "p.csv")

    def test_unsorted_rejected(self, tmp_path):
        write_station_csv(tmp_path / "p.csv", blank_series(3))
        lines = (tmp_path / "p.csv").read_text().splitlines()
        lines[1], lines[2] = lines[2], lines[1]
        (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError):
            read_station_csv(tmp_path / "p.csv")
