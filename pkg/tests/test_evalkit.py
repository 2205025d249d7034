import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cc_def, csi_def, mae_def, r2_def, rmse_def
from m3r.errors import EmptyInput, LengthMismatch
from m3r.evalkit import (
    CSV_HEADER,
    ContingencyTable,
    compute_metrics,
    metrics_csv,
    persistence_baseline,
    zr_rainfall,
)
from m3r.m3rnet import Batch
from m3r.m3rnet.train import Standardizer
from m3r.stationproc import PRECIP_INDEX


def rain_pairs(seed, n=1000):
    rng = np.random.default_rng(seed)
    target = np.where(rng.random(n) < 0.4, rng.gamma(1.5, 5.0, n), 0.0)
    pred = np.maximum(target + rng.normal(0, 3, n), 0)
    return pred, target


class TestMetrics:
    @pytest.mark.parametrize("seed", range(3))
    def test_definitional_oracles(self, seed):
        p, t = rain_pairs(seed)
        m = compute_metrics(p, t)
        pl, tl = p.tolist(), t.tolist()
        assert m.rmse == pytest.approx(rmse_def(pl, tl), abs=1e-9)
        assert m.mae == pytest.approx(mae_def(pl, tl), abs=1e-9)
        assert m.r2 == pytest.approx(r2_def(pl, tl), abs=1e-9)
        assert m.cc == pytest.approx(cc_def(pl, tl), abs=1e-9)
        for thr in (0.1, 5.0, 10.0):
            assert m.csi[thr] == pytest.approx(csi_def(pl, tl, thr), abs=1e-9)
        assert m.flags == []

    def test_perfect(self):
        t = np.array([0.0, 1.0, 6.0, 12.0])
        m = compute_metrics(t, t)
        assert (m.rmse, m.mae, m.r2, m.cc) == (0.0, 0.0, 1.0, 1.0)
        assert all(v == 1.0 for v in m.csi.values())

    def test_r2_equals_cc_squared_for_least_squares_fit(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=500)
        x = t + rng.normal(size=500)
        slope, intercept = np.polyfit(x, t, 1)
        m = compute_metrics(slope * x + intercept, t)
        assert m.r2 == pytest.approx(m.cc**2, abs=1e-9)

    def test_constant_target_flagged(self):
        m = compute_metrics([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
        assert m.r2 == 0.0 and "constant_target" in m.flags and "cc_undefined" in m.flags

    def test_csi_empty_flagged(self):
        m = compute_metrics([0.0, 0.0], [0.0, 0.0])
        assert m.csi[10.0] == 0.0 and "csi_10_empty" in m.flags

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            compute_metrics([1.0], [1.0, 2.0])
        with pytest.raises(EmptyInput):
            compute_metrics([], [])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 60))
    def test_invariants(self, seed, n):
        p, t = rain_pairs(seed, n)
        m = compute_metrics(p, t)
        assert m.rmse >= m.mae - 1e-12 >= -1e-12
        assert -1 <= m.cc <= 1 and m.r2 <= 1
        assert all(0 <= v <= 1 for v in m.csi.values())


class TestContingency:
    def test_counts(self):
        table = ContingencyTable.from_arrays([0, 5, 6, 1], [5, 5, 0, 1], 5.0)
        assert (table.hits, table.misses, table.false_alarms, table.correct_negatives) == (1, 1, 1, 1)
        assert table.total == 4 and table.csi() == pytest.approx(1 / 3)

    def test_threshold_inclusive(self):
        assert ContingencyTable.from_arrays([0.1], [0.1], 0.1).hits == 1

    def test_no_events(self):
        assert ContingencyTable.from_arrays([0.0], [0.0], 5.0).csi() is None


class TestZr:
    def test_inverse_at_round_number(self):
        # z = 200 * 1**1.6 = 200 -> 23.0103 dBZ gives 1 mm/hr
        assert zr_rainfall(10 * np.log10(200)) == pytest.approx(1.0, rel=1e-12)

    def test_monotone_and_forward_law(self):
        z = np.linspace(0, 60, 50)
        r = zr_rainfall(z)
        assert np.all(np.diff(r) > 0)
        assert np.allclose(200 * r**1.6, 10 ** (z / 10), rtol=1e-12)


def test_persistence_repeats_last_observation():
    stats = Standardizer(np.arange(20, dtype=np.float32), np.full(20, 2.0, np.float32))
    raw = np.zeros((2, 4, 20))
    raw[:, -1, PRECIP_INDEX] = [3.0, 7.5]
    met = stats.apply(raw)
    out = persistence_baseline(Batch(np.zeros((2, 4, 1, 1, 1)), met), stats)
    assert out.shape == (2, 4)
    assert np.allclose(out, [[3.0] * 4, [7.5] * 4])


def test_metrics_csv_layout():
    p, t = rain_pairs(0, 50)
    text = metrics_csv([("full", compute_metrics(p, t)), ("persistence", compute_metrics(t, t))])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["full", "persistence"]
    assert float(rows[2][1]) == 0.0
