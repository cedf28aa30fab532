"""Arrival-process tests: burst/gap statistics, the BFI rate cap, file IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfsense.traffic import (TrafficModel, burstiness_index, generate_arrivals,
                             load_sample_times, max_rate_in_window,
                             save_sample_times, windowed_counts)


class TestGenerateArrivals:
    def test_determinism_per_seed(self):
        model = TrafficModel(kind="dl_csi", seed=42)
        a = generate_arrivals(model, 20.0)
        b = generate_arrivals(model, 20.0)
        assert np.array_equal(a.times, b.times)
        c = generate_arrivals(model.with_seed(43), 20.0)
        assert not np.array_equal(a.times, c.times)

    def test_rate_approaches_burst_rate_without_gaps(self):
        # vanishing gaps: the stream is a plain Poisson process at the burst rate
        rates = []
        for seed in range(20):
            model = TrafficModel(kind="dl_csi", mean_burst_s=0.3, mean_gap_s=1e-9,
                                 rate_in_burst_hz=500.0, seed=seed)
            st_ = generate_arrivals(model, 100.0)
            rates.append(len(st_) / 100.0)
        assert np.mean(rates) == pytest.approx(500.0, rel=0.05)

    def test_tiny_duration_often_empty(self):
        empties = 0
        for seed in range(30):
            model = TrafficModel(kind="dl_csi", mean_gap_s=1.0, seed=seed)
            if len(generate_arrivals(model, 1e-4)) == 0:
                empties += 1
        assert empties > 15

    def test_bfi_cap_never_exceeded(self):
        for seed in range(10):
            model = TrafficModel(kind="ul_bfi", rate_in_burst_hz=2000.0,
                                 mean_burst_s=2.0, mean_gap_s=0.2, seed=seed)
            st_ = generate_arrivals(model, 30.0)
            assert max_rate_in_window(st_.times, 1.0) <= 10

    def test_bfi_much_sparser_than_dl(self):
        dl = generate_arrivals(TrafficModel(kind="dl_csi", seed=5), 60.0)
        bfi = generate_arrivals(TrafficModel(kind="ul_bfi", seed=5), 60.0)
        assert len(bfi) < len(dl) / 10

    def test_burstiness_exceeds_poisson(self):
        model = TrafficModel(kind="dl_csi", seed=3)
        st_ = generate_arrivals(model, 120.0)
        assert burstiness_index(st_.times, 120.0, 0.1) > 1.0

    def test_contention_reduces_sample_count(self):
        counts_1, counts_4 = [], []
        for seed in range(20):
            counts_1.append(len(generate_arrivals(
                TrafficModel(kind="dl_csi", contention_users=1, seed=seed), 60.0)))
            counts_4.append(len(generate_arrivals(
                TrafficModel(kind="dl_csi", contention_users=4, seed=seed), 60.0)))
        assert np.median(counts_4) < np.median(counts_1)

    def test_in_burst_rate_matches_axis_scale(self):
        # frames per 100 ms inside a burst should sit in the 50..200 range
        model = TrafficModel(kind="dl_csi", seed=11)
        st_ = generate_arrivals(model, 120.0)
        counts = windowed_counts(st_.times, 120.0, 0.1)
        busy = counts[counts > 10]
        assert busy.size > 0
        assert 50 <= np.median(busy) <= 200

    @given(seed=st.integers(0, 2 ** 31), duration=st.floats(0.1, 30.0))
    @settings(max_examples=25, deadline=None)
    def test_times_strictly_increasing_within_bounds(self, seed, duration):
        model = TrafficModel(kind="dl_csi", seed=seed)
        st_ = generate_arrivals(model, duration)
        t = st_.times
        if t.size:
            assert t[0] >= 0.0 and t[-1] <= duration
            assert np.all(np.diff(t) > 0)


class TestModelValidation:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            TrafficModel(kind="dl")

    def test_bad_durations(self):
        with pytest.raises(ValueError):
            TrafficModel(mean_burst_s=0.0)
        with pytest.raises(ValueError):
            TrafficModel(rate_in_burst_hz=-5.0)
        with pytest.raises(ValueError):
            TrafficModel(contention_users=0)


class TestSampleTimesIO:
    def test_round_trip(self, tmp_path):
        model = TrafficModel(kind="ul_csi", seed=9)
        st_ = generate_arrivals(model, 5.0)
        path = tmp_path / "times.txt"
        save_sample_times(st_, path)
        loaded = load_sample_times(path)
        assert loaded.duration == pytest.approx(st_.duration, abs=1e-6)
        assert np.allclose(loaded.times, st_.times, atol=1e-6)

    def test_plain_trace_without_header(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text("0.100000\n0.250000\n1.000000\n")
        loaded = load_sample_times(path)
        assert len(loaded) == 3
        assert loaded.duration == pytest.approx(1.0)
