"""Pipeline tests: segmentation, resampling, STFT, normalization, masks,
and dataset construction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfsense.scene import CsiSeries
from nfsense.sra import (Dataset, SraConfig, build_dataset, chop_labels,
                         extract_label_slices, load_dataset, load_spectrogram,
                         lowpass_taps, make_mask, minmax_normalize, normalize,
                         process_series, resample, save_dataset,
                         save_spectrogram, segment, spectrogram,
                         stft_magnitudes)


def series_from_times(times, values=None, link="t"):
    times = np.asarray(times, dtype=float)
    if values is None:
        values = np.exp(1j * np.zeros_like(times))
    return CsiSeries(timestamps=times, values=values, link_id=link)


def phase_series(times, phases, link="t"):
    return CsiSeries(timestamps=np.asarray(times, dtype=float),
                     values=np.exp(1j * np.asarray(phases, dtype=float)),
                     link_id=link)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SraConfig(dt=0.0)
        with pytest.raises(ValueError):
            SraConfig(f_rs=1.5, f_cut=1.0)
        with pytest.raises(ValueError):
            SraConfig(n_f=200, fft_len=256)
        with pytest.raises(ValueError):
            SraConfig(hop=0)

    def test_presets(self):
        g = SraConfig.gesture()
        assert g.f_cut == 20.0 and g.fft_len == 64
        r = SraConfig.respiration()
        assert r.f_cut == 1.0 and r.fft_len == 256 and r.n_f == 32


class TestSegment:
    CFG = SraConfig()

    def test_uniform_dense_series_is_one_non_sparse_slice(self):
        t = np.arange(0, 3.0, 1 / 64)
        slices = segment(series_from_times(t), self.CFG)
        assert len(slices) == 1
        assert slices[0].non_sparse
        assert slices[0].t0 == 0.0 and slices[0].t1 == pytest.approx(3.0)

    def test_empty_series_is_one_sparse_slice(self):
        slices = segment(series_from_times([]), self.CFG, duration=2.0)
        assert len(slices) == 1
        assert not slices[0].non_sparse
        assert slices[0].t1 == 2.0

    def test_gap_produces_three_slices(self):
        t = np.concatenate([np.arange(0, 1.0, 1 / 64), np.arange(2.0, 3.0, 1 / 64)])
        slices = segment(series_from_times(t), self.CFG, duration=3.0)
        labels = [s.non_sparse for s in slices]
        assert labels == [True, False, True]
        assert slices[0].t1 == pytest.approx(1.0, abs=self.CFG.dt)
        assert slices[1].t1 == pytest.approx(2.0, abs=self.CFG.dt)

    def test_threshold_is_strict(self):
        # exactly n_nsp samples per window stays sparse; n_nsp+1 flips it
        cfg = SraConfig(n_nsp=2)
        t2 = np.array([0.01, 0.05])           # 2 samples in window 0
        assert not segment(series_from_times(t2), cfg, duration=0.1)[0].non_sparse
        t3 = np.array([0.01, 0.05, 0.09])     # 3 samples
        assert segment(series_from_times(t3), cfg, duration=0.1)[0].non_sparse

    def test_full_coverage_no_overlap(self):
        rng = np.random.default_rng(5)
        t = np.sort(rng.uniform(0, 10.0, size=200))
        t = np.unique(t)
        slices = segment(series_from_times(t), self.CFG, duration=10.0)
        assert slices[0].t0 == 0.0
        assert slices[-1].t1 == pytest.approx(10.0)
        for a, b in zip(slices, slices[1:]):
            assert a.t1 == pytest.approx(b.t0)
            assert a.non_sparse != b.non_sparse


class TestResample:
    def test_dense_sinusoid_amplitude_preserved(self):
        cfg = SraConfig()
        t = np.arange(0, 24.0, 1 / 200)  # oversampled input
        x = np.sin(2 * np.pi * 0.25 * t)
        ser = phase_series(t, x)
        seg = segment(ser, cfg, duration=24.0)
        rs = resample(ser, seg, cfg, duration=24.0)
        assert not rs.no_data.any()
        grid = np.arange(len(rs)) / cfg.f_rs
        ref = np.sin(2 * np.pi * 0.25 * grid)
        # amplitude via RMS over the central half (filter transients excluded)
        inner = slice(len(rs) // 4, -len(rs) // 4)
        gain = np.sqrt(np.mean(rs.values[inner] ** 2) / np.mean(ref[inner] ** 2))
        assert abs(gain - 1.0) < 0.01

    def test_sparse_slice_tagging_and_bridging(self):
        cfg = SraConfig()
        # two isolated samples at 1.0 s and 2.0 s inside a 3 s window
        ser = phase_series([1.0, 2.0], [0.5, 0.5])
        seg = segment(ser, cfg, duration=3.0)
        assert all(not s.non_sparse for s in seg)
        rs = resample(ser, seg, cfg, duration=3.0)
        k1 = int(round(1.0 * cfg.f_rs))
        k2 = int(round(2.0 * cfg.f_rs))
        assert not rs.no_data[k1] and not rs.no_data[k2]
        assert rs.no_data.sum() == len(rs) - 2
        assert np.all(np.isfinite(rs.values))

    def test_hampel_removes_spike(self):
        cfg = SraConfig()
        t = np.arange(0, 6.0, 1 / 64)
        clean = 0.3 * np.sin(2 * np.pi * 0.25 * t)
        spiked = clean.copy()
        spiked[200] += 10.0 * clean.std()
        rs_clean = resample(phase_series(t, clean), segment(phase_series(t, clean), cfg, 6.0), cfg, 6.0)
        rs_spiked = resample(phase_series(t, spiked), segment(phase_series(t, spiked), cfg, 6.0), cfg, 6.0)
        noise = np.max(np.abs(rs_spiked.values - rs_clean.values))
        assert noise < 3.0 * 0.01  # spike suppressed to the filter-ripple level

    def test_consistency_inside_non_sparse_slices(self):
        cfg = SraConfig()
        rng = np.random.default_rng(8)
        t = np.sort(rng.uniform(0, 5.0, size=600))
        t = np.unique(t)
        ser = phase_series(t, np.cos(t))
        seg = segment(ser, cfg, duration=5.0)
        rs = resample(ser, seg, cfg, duration=5.0)
        grid = np.arange(len(rs)) / cfg.f_rs
        for sl in seg:
            if sl.non_sparse:
                inside = (grid >= sl.t0) & (grid < sl.t1)
                assert not rs.no_data[inside].any()


class TestSpectrogram:
    def test_tone_at_bin_center(self):
        cfg = SraConfig()
        n = cfg.fft_len * 4
        grid = np.arange(n) / cfg.f_rs
        tone_hz = 4 * cfg.df_hz  # bin 4
        from nfsense.sra import ResampledSeries
        rs = ResampledSeries(values=np.sin(2 * np.pi * tone_hz * grid),
                             no_data=np.zeros(n, dtype=bool), rate=cfg.f_rs)
        spec = spectrogram(rs, cfg)
        assert np.all(np.argmax(spec.data, axis=0) == 4)

    def test_too_short_series_rejected(self):
        cfg = SraConfig()
        from nfsense.sra import ResampledSeries
        rs = ResampledSeries(values=np.zeros(cfg.fft_len - 1),
                             no_data=np.zeros(cfg.fft_len - 1, dtype=bool), rate=cfg.f_rs)
        with pytest.raises(ValueError):
            spectrogram(rs, cfg)

    def test_all_no_data_gives_sentinel_columns(self):
        cfg = SraConfig()
        from nfsense.sra import ResampledSeries
        n = cfg.fft_len * 2
        rs = ResampledSeries(values=np.zeros(n), no_data=np.ones(n, dtype=bool),
                             rate=cfg.f_rs)
        spec = spectrogram(rs, cfg)
        assert spec.no_data_cols.all()
        assert np.all(spec.data == -1.0)

    def test_parseval_pre_normalization(self):
        cfg = SraConfig()
        rng = np.random.default_rng(9)
        n = cfg.fft_len * 2
        from nfsense.sra import ResampledSeries
        rs = ResampledSeries(values=rng.standard_normal(n),
                             no_data=np.zeros(n, dtype=bool), rate=cfg.f_rs)
        window = 0.5 * (1 - np.cos(2 * np.pi * np.arange(cfg.fft_len) / cfg.fft_len))
        chunk = rs.values[:cfg.fft_len]
        windowed = (chunk - chunk.mean()) * window
        full = np.fft.fft(windowed)
        time_energy = np.sum(windowed ** 2)
        freq_energy = np.sum(np.abs(full) ** 2) / cfg.fft_len
        assert freq_energy == pytest.approx(time_energy, rel=1e-9)

    def test_values_always_within_bounds(self):
        cfg = SraConfig()
        rng = np.random.default_rng(10)
        t = np.sort(rng.uniform(0, 20.0, size=3000))
        t = np.unique(t)
        ser = phase_series(t, np.sin(t) + 0.1 * rng.standard_normal(t.size))
        spec = process_series(ser, cfg, duration=20.0)
        assert spec.data.min() >= -1.0 and spec.data.max() <= 1.0


class TestNormalize:
    def test_three_values(self):
        raw = np.array([[2.0, 4.0, 6.0]])
        flags = np.zeros(3, dtype=bool)
        out = minmax_normalize(raw, flags)
        assert np.allclose(out, [[0.0, 0.5, 1.0]])

    def test_constant_maps_to_zero(self):
        raw = np.full((4, 5), 3.3)
        out = minmax_normalize(raw, np.zeros(5, dtype=bool))
        assert np.all(out == 0.0)

    def test_flagged_columns_sentinel_and_order_preserved(self):
        raw = np.array([[1.0, 9.0, 5.0], [3.0, 7.0, 2.0]])
        flags = np.array([False, True, False])
        out = minmax_normalize(raw, flags)
        assert np.all(out[:, 1] == -1.0)
        valid = out[:, [0, 2]]
        assert (np.argsort(raw[:, [0, 2]].ravel()) == np.argsort(valid.ravel())).all()

    def test_idempotent_on_normalized_input(self):
        rng = np.random.default_rng(11)
        raw = rng.uniform(0, 1, size=(8, 12))
        raw.ravel()[rng.choice(raw.size, 2, replace=False)] = (0.0, 1.0)
        flags = np.zeros(12, dtype=bool)
        once = minmax_normalize(raw, flags)
        twice = minmax_normalize(once, flags)
        assert np.allclose(once, twice, atol=1e-15)

    @given(st.integers(0, 2 ** 30))
    @settings(max_examples=20, deadline=None)
    def test_range_property(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.normal(0, 10, size=(6, 9))
        flags = rng.random(9) < 0.3
        spec = normalize(raw, flags)
        assert spec.data.min() >= -1.0 and spec.data.max() <= 1.0
        if (~flags).any():
            assert spec.data[:, ~flags].min() >= 0.0


class TestMakeMask:
    def test_extremes(self):
        assert not make_mask(50, 0.0, 8.0, 1).any()
        assert make_mask(50, 1.0, 8.0, 1).all()

    def test_statistics(self):
        fractions, runs = [], []
        for seed in range(100):
            mask = make_mask(2000, 0.3, 8.0, seed)
            fractions.append(mask.mean())
            # mean run length of True segments
            padded = np.concatenate([[False], mask, [False]])
            starts = np.where(np.diff(padded.astype(int)) == 1)[0]
            stops = np.where(np.diff(padded.astype(int)) == -1)[0]
            if starts.size:
                runs.append(np.mean(stops - starts))
        assert 0.27 <= np.mean(fractions) <= 0.33
        assert 7.2 <= np.mean(runs) <= 8.8

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            make_mask(10, 1.5, 8.0, 0)


class TestBuildDataset:
    def _labels(self, n, width=40, seed=0):
        rng = np.random.default_rng(seed)
        return [rng.uniform(0, 1, size=(8, width)) for _ in range(n)]

    def test_split_counts(self):
        ds = build_dataset(self._labels(10), masks_per_label=1, mask_fraction=0.3,
                           mean_run_frames=4.0, split_fraction=0.7, seed=0)
        assert len(ds.train) == 7 and len(ds.test) == 3

    def test_identity_pairs_with_zero_fraction(self):
        ds = build_dataset(self._labels(4), masks_per_label=1, mask_fraction=0.0,
                           mean_run_frames=4.0, seed=0)
        for x, y in list(ds.train) + list(ds.test):
            assert np.array_equal(x, y)

    def test_masked_columns_are_sentinel(self):
        ds = build_dataset(self._labels(4), masks_per_label=2, mask_fraction=0.5,
                           mean_run_frames=3.0, seed=1)
        for x, y in ds.train:
            cols = np.all(x == -1.0, axis=0)
            assert cols.any()
            assert np.array_equal(x[:, ~cols], y[:, ~cols])

    def test_determinism_via_serialization(self, tmp_path):
        labels = self._labels(6)
        a = build_dataset(labels, 2, 0.3, 4.0, 0.7, seed=3)
        b = build_dataset(labels, 2, 0.3, 4.0, 0.7, seed=3)
        da, db = tmp_path / "a", tmp_path / "b"
        save_dataset(a, da)
        save_dataset(b, db)
        for sub in ("train", "test"):
            fa = sorted((da / sub).iterdir())
            fb = sorted((db / sub).iterdir())
            assert [f.name for f in fa] == [f.name for f in fb]
            for pa, pb in zip(fa, fb):
                assert pa.read_bytes() == pb.read_bytes()

    def test_no_labels_raises(self):
        with pytest.raises(ValueError):
            build_dataset([], 1, 0.3, 4.0)

    def test_round_trip(self, tmp_path):
        ds = build_dataset(self._labels(3), 1, 0.4, 4.0, seed=2)
        save_dataset(ds, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert len(loaded.train) == len(ds.train)
        for (x1, y1), (x2, y2) in zip(ds.train, loaded.train):
            assert np.allclose(x1, x2, atol=1e-8)
            assert np.allclose(y1, y2, atol=1e-8)


class TestLabelSlices:
    def test_extraction_and_chopping(self):
        cfg = SraConfig()
        n_t = 100
        data = np.random.default_rng(1).uniform(0, 1, size=(cfg.n_f, n_t))
        flags = np.zeros(n_t, dtype=bool)
        flags[30:40] = True  # a sentinel run splits the spectrogram
        data[:, flags] = -1.0
        from nfsense.sra import Spectrogram
        spec = Spectrogram(data=data, no_data_cols=flags,
                           frame_times=np.arange(n_t) * cfg.frame_dt_s, df_hz=cfg.df_hz)
        labels = extract_label_slices(spec, cfg)
        assert [lab.shape[1] for lab in labels] == [30, 60]
        chopped = chop_labels(labels, 25, 20)
        assert all(lab.shape[1] <= 25 for lab in chopped)

    def test_short_runs_dropped(self):
        cfg = SraConfig()  # min 4 s = 16 frames at 0.25 s
        data = np.zeros((cfg.n_f, 10))
        from nfsense.sra import Spectrogram
        spec = Spectrogram(data=data, no_data_cols=np.zeros(10, dtype=bool),
                           frame_times=np.arange(10) * cfg.frame_dt_s)
        assert extract_label_slices(spec, cfg) == []


class TestSpectrogramIO:
    def test_round_trip(self, tmp_path):
        cfg = SraConfig()
        rng = np.random.default_rng(3)
        n_t = 20
        data = rng.uniform(0, 1, size=(cfg.n_f, n_t))
        flags = rng.random(n_t) < 0.3
        data[:, flags] = -1.0
        from nfsense.sra import Spectrogram
        spec = Spectrogram(data=data, no_data_cols=flags,
                           frame_times=2.0 + np.arange(n_t) * 0.25, df_hz=cfg.df_hz)
        path = tmp_path / "spec.txt"
        save_spectrogram(spec, path)
        loaded = load_spectrogram(path, df_hz=cfg.df_hz)
        assert np.allclose(loaded.data, spec.data, atol=1e-8)
        assert np.array_equal(loaded.no_data_cols, spec.no_data_cols)
        assert np.allclose(loaded.frame_times, spec.frame_times, atol=1e-8)
        header = path.read_text().splitlines()[0].split()
        assert header[0] == str(cfg.n_f) and header[1] == str(n_t)


class TestLowpass:
    def test_passband_and_stopband(self):
        taps = lowpass_taps(1.0, 64.0)
        w = np.fft.rfftfreq(4096, 1 / 64.0)
        resp = np.abs(np.fft.rfft(taps, 4096))
        assert resp[np.argmin(np.abs(w - 0.25))] == pytest.approx(1.0, abs=0.01)
        assert resp[np.argmin(np.abs(w - 4.0))] < 0.01
