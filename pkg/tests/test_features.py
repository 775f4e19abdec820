import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from famfeat.bands import DEFAULT_BAND_PLAN
from famfeat.errors import ParameterError, UndefinedFeatureError
from famfeat.features import (
    FeatureVector,
    Psd,
    all_channel_pairs,
    band_powers,
    central_moment,
    channel_correlations,
    estimate_psd,
    extract_epoch_features,
    feature_channels,
    feature_family,
    harmonic_parameters,
    parent_band_powers,
    per_channel_feature_count,
    slow_wave_indices,
    spectral_frequency_features,
    statistical_time_features,
)
from famfeat.preprocess import Epoch

import oracles
from conftest import FS, noise_epoch, tone, tone_epoch


class TestCentralMoment:
    def test_hand_example(self):
        assert central_moment([1, 2, 3], 2) == pytest.approx(2 / 3, abs=1e-12)
        assert central_moment([1, 2, 3], 2) == pytest.approx(
            oracles.moment_direct([1, 2, 3], 2), abs=1e-12
        )

    def test_first_moment_is_zero(self, rng):
        x = rng.normal(size=100)
        assert central_moment(x, 1) == pytest.approx(0.0, abs=1e-12)

    def test_constant_signal_all_orders_zero(self):
        x = np.full(50, 3.7)
        for k in (2, 3, 4):
            assert central_moment(x, k) == pytest.approx(0.0, abs=1e-24)

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            central_moment([], 2)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=40),
           st.integers(min_value=1, max_value=5))
    @settings(max_examples=50, deadline=None)
    def test_matches_direct_summation(self, xs, k):
        assert central_moment(xs, k) == pytest.approx(
            oracles.moment_direct(xs, k), rel=1e-9, abs=1e-9
        )


class TestStatisticalTimeFeatures:
    def test_sine_moments(self):
        # full periods: skewness ~ 0, kurtosis ~ 1.5
        x = tone(10.0, n=1000)  # 20 full periods at 500 Hz
        f = statistical_time_features(x, FS)
        assert abs(f.skewness) < 1e-10
        assert f.kurtosis == pytest.approx(1.5, abs=1e-3)
        assert f.skewness == pytest.approx(oracles.skewness_direct(x), abs=1e-12)
        assert f.kurtosis == pytest.approx(oracles.kurtosis_direct(x), abs=1e-9)

    def test_gaussian_moments(self):
        x = np.random.default_rng(0).normal(size=1_000_000)
        f = statistical_time_features(x, FS)
        assert -0.02 < f.skewness < 0.02
        assert 2.95 < f.kurtosis < 3.05

    def test_sine_mobility_matches_angular_frequency(self):
        x = tone(10.0, n=4000)
        f = statistical_time_features(x, FS)
        expected = oracles.mobility_dense_sine(10.0)
        assert f.mobility == pytest.approx(expected, rel=0.01)
        assert f.mobility == pytest.approx(2 * np.pi * 10.0, rel=0.01)

    def test_activity_is_variance(self, rng):
        x = rng.normal(size=500)
        f = statistical_time_features(x, FS)
        assert f.activity == pytest.approx(oracles.variance_direct(x), rel=1e-9)

    def test_constant_signal_undefined(self):
        with pytest.raises(UndefinedFeatureError):
            statistical_time_features(np.ones(100), FS)

    def test_scale_invariance(self, rng):
        x = rng.normal(size=900)
        base = statistical_time_features(x, FS)
        scaled = statistical_time_features(3.7 * x, FS)
        for name in ("skewness", "kurtosis", "mobility", "complexity"):
            assert getattr(scaled, name) == pytest.approx(
                getattr(base, name), rel=1e-9
            )
        assert scaled.activity == pytest.approx(3.7**2 * base.activity, rel=1e-9)


class TestEstimatePsd:
    def test_tone_peak_at_tone_frequency(self):
        psd = estimate_psd(tone(10.0), FS)
        mode = psd.freqs[np.argmax(psd.power)]
        assert abs(mode - 10.0) <= psd.resolution

    def test_white_noise_flat_across_subbands(self, rng):
        # per-Hz band power ratio < 3 averaged over 100 trials
        acc = None
        for _ in range(100):
            psd = estimate_psd(rng.normal(size=900), FS)
            acc = psd.power if acc is None else acc + psd.power
        mean_psd = Psd(freqs=psd.freqs, power=acc / 100.0, resolution=psd.resolution)
        absolute, _ = band_powers(mean_psd, DEFAULT_BAND_PLAN)
        per_hz = {
            b.name: absolute[b.name] / (b.hi - b.lo) for b in DEFAULT_BAND_PLAN.sub_bands
        }
        assert max(per_hz.values()) / min(per_hz.values()) < 3.0

    def test_zero_signal_zero_power(self):
        psd = estimate_psd(np.zeros(900), FS)
        assert np.all(psd.power == 0)

    def test_parseval_within_5_percent(self, rng):
        for x in (tone(7.0), tone(21.0, amp=2.0), rng.normal(size=4500)):
            psd = estimate_psd(x, FS)
            var = np.var(x - x.mean())
            assert psd.total_power == pytest.approx(var, rel=0.05)

    def test_too_short_signal_rejected(self):
        with pytest.raises(ParameterError):
            estimate_psd(np.zeros(100), FS, segment_len=256)


class TestSpectralFrequencyFeatures:
    def test_pure_tone_mode_median_mean_coincide(self):
        psd = estimate_psd(tone(10.0), FS)
        f = spectral_frequency_features(psd)
        for v in f:
            assert abs(v - 10.0) <= psd.resolution

    def test_flat_spectrum(self):
        freqs = np.linspace(0, 250, 451)
        psd = Psd(freqs=freqs, power=np.ones_like(freqs), resolution=float(freqs[1]))
        f = spectral_frequency_features(psd)
        assert f.mean == pytest.approx(125.0, abs=psd.resolution)
        assert f.median == pytest.approx(125.0, abs=psd.resolution)
        assert f.mean == pytest.approx(
            oracles.spectral_mean_direct(psd.freqs, psd.power), rel=1e-12
        )
        assert f.median == pytest.approx(
            oracles.spectral_median_direct(psd.freqs, psd.power), abs=1e-12
        )

    def test_two_equal_tones_mean_midway(self):
        x = tone(5.0) + tone(15.0, phase=1.0)
        psd = estimate_psd(x, FS)
        f = spectral_frequency_features(psd)
        assert abs(f.mean - 10.0) <= psd.resolution
        assert f.mean == pytest.approx(
            oracles.spectral_mean_direct(psd.freqs, psd.power), rel=1e-12
        )

    def test_zero_spectrum_undefined(self):
        psd = estimate_psd(np.zeros(900), FS)
        with pytest.raises(UndefinedFeatureError):
            spectral_frequency_features(psd)


class TestBandPowers:
    def test_9hz_tone_lands_in_alpha1(self):
        psd = estimate_psd(tone(9.0), FS)
        absolute, relative = band_powers(psd, DEFAULT_BAND_PLAN)
        assert relative["Alpha1"] > 0.95
        direct = oracles.band_power_direct(psd.freqs, psd.power, 8.0, 10.0, psd.resolution)
        assert absolute["Alpha1"] == pytest.approx(direct, rel=1e-12)

    def test_ten_centered_tones_equal_shares(self):
        x = sum(
            tone((b.lo + b.hi) / 2, phase=0.7 * i)
            for i, b in enumerate(DEFAULT_BAND_PLAN.sub_bands)
        )
        psd = estimate_psd(x, FS)
        _, relative = band_powers(psd, DEFAULT_BAND_PLAN)
        for b in DEFAULT_BAND_PLAN.sub_bands:
            assert relative[b.name] == pytest.approx(0.1, abs=0.02)

    def test_relative_powers_sum_to_one(self, rng):
        for _ in range(20):
            psd = estimate_psd(rng.normal(size=900), FS)
            _, relative = band_powers(psd, DEFAULT_BAND_PLAN)
            assert sum(relative.values()) == pytest.approx(1.0, abs=1e-9)

    def test_grid_not_covering_plan_rejected(self):
        freqs = np.linspace(0, 20, 100)
        psd = Psd(freqs=freqs, power=np.ones_like(freqs), resolution=float(freqs[1]))
        with pytest.raises(ParameterError):
            band_powers(psd, DEFAULT_BAND_PLAN)


class TestSlowWaveIndices:
    def test_direct_arithmetic(self):
        swi = slow_wave_indices(2.0, 1.0, 1.0)
        assert swi.dsi == pytest.approx(1.0)
        assert swi.tsi == pytest.approx(1 / 3)
        assert swi.asi == pytest.approx(1 / 3)

    def test_symmetric_case(self):
        swi = slow_wave_indices(1.0, 1.0, 1.0)
        assert swi == pytest.approx((0.5, 0.5, 0.5))

    def test_zero_numerator(self):
        swi = slow_wave_indices(0.0, 1.0, 1.0)
        assert swi == pytest.approx((0.0, 1.0, 1.0))

    def test_zero_denominator_names_index(self):
        with pytest.raises(UndefinedFeatureError, match="DSI"):
            slow_wave_indices(1.0, 0.0, 0.0)

    @given(
        st.floats(0.01, 1e6), st.floats(0.01, 1e6), st.floats(0.01, 1e6), st.floats(0.01, 1e3)
    )
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, d, t, a, c):
        base = slow_wave_indices(d, t, a)
        scaled = slow_wave_indices(c * d, c * t, c * a)
        assert scaled == pytest.approx(base, rel=1e-9)


class TestHarmonicParameters:
    def test_tone_in_theta_band(self):
        psd = estimate_psd(tone(6.0), FS)
        h = harmonic_parameters(psd, (4.0, 8.0))
        assert h.fc == pytest.approx(6.0, abs=psd.resolution)
        assert h.fsigma < 2 * psd.resolution
        fc_d, fsig_d, sfc_d = oracles.harmonic_direct(psd.freqs, psd.power, 4.0, 8.0)
        assert h.fc == pytest.approx(fc_d, rel=1e-12)
        assert h.fsigma == pytest.approx(fsig_d, rel=1e-9, abs=1e-12)
        assert h.sfc == pytest.approx(sfc_d, rel=1e-12)

    def test_flat_density_moments(self):
        freqs = np.arange(0, 251, 0.5)
        psd = Psd(freqs=freqs, power=np.ones_like(freqs), resolution=0.5)
        lo, hi = 8.0, 14.0
        h = harmonic_parameters(psd, (lo, hi))
        assert h.fc == pytest.approx((lo + hi) / 2, abs=psd.resolution)
        assert h.fsigma == pytest.approx((hi - lo) / np.sqrt(12), abs=psd.resolution)

    def test_zero_band_power_undefined(self):
        freqs = np.arange(0, 251, 0.5)
        power = np.where(freqs > 5.0, 1.0, 0.0)
        psd = Psd(freqs=freqs, power=power, resolution=0.5)
        with pytest.raises(UndefinedFeatureError):
            harmonic_parameters(psd, (1.0, 2.0))


class TestChannelCorrelations:
    def test_self_correlation_one(self, rng):
        s = rng.normal(size=(900, 2))
        assert channel_correlations(s, [(0, 0)])[0] == pytest.approx(1.0)

    def test_sign_flip(self, rng):
        x = rng.normal(size=900)
        s = np.column_stack([x, -x])
        assert channel_correlations(s, [(0, 1)])[0] == pytest.approx(-1.0)

    def test_independent_channels_near_zero(self, rng):
        # |r| < 0.11 with high probability at 900 samples (~3/sqrt(n))
        hits = 0
        for _ in range(50):
            s = rng.normal(size=(900, 2))
            r = channel_correlations(s, [(0, 1)])[0]
            hits += int(abs(r) < 0.11)
        assert hits >= 49

    def test_matches_direct_formula(self, rng):
        s = rng.normal(size=(900, 3))
        r = channel_correlations(s, [(0, 2)])[0]
        assert r == pytest.approx(oracles.pearson_direct(s[:, 0], s[:, 2]), rel=1e-12)

    def test_constant_channel_named(self, rng):
        s = np.column_stack([np.ones(900), rng.normal(size=900)])
        with pytest.raises(UndefinedFeatureError, match="0"):
            channel_correlations(s, [(0, 1)])


class TestExtractEpochFeatures:
    def test_full_layout_21_channels(self, rng):
        ep = noise_epoch(rng, channels=21)
        fv = extract_epoch_features(ep)
        assert len(fv.names) == 21 * 52 + 210
        assert len(fv.names) == len(set(fv.names))
        assert np.all(np.isfinite(fv.values))
        assert fv.missing == []

    def test_single_channel_no_pairs(self, rng):
        ep = noise_epoch(rng, channels=1)
        fv = extract_epoch_features(ep, pairs=[])
        assert len(fv.names) == 52
        assert per_channel_feature_count() == 52

    def test_family_sizes(self, rng):
        ep = noise_epoch(rng, channels=1)
        fv = extract_epoch_features(ep, pairs=[])
        families = {}
        for n in fv.names:
            families[feature_family(n)] = families.get(feature_family(n), 0) + 1
        assert families["frequency"] == 16
        assert families["harmonic"] == 15
        assert families["wavelet"] == 16
        assert families["statistical_time"] == 5

    def test_deterministic_bit_identical(self, rng):
        ep = noise_epoch(rng, channels=3)
        a = extract_epoch_features(ep)
        b = extract_epoch_features(ep)
        assert a.names == b.names
        assert np.array_equal(a.values, b.values)

    def test_family_toggle_removes_columns(self, rng):
        ep = noise_epoch(rng, channels=2)
        fv = extract_epoch_features(ep, families={"wavelet": False})
        assert not any(n.startswith("wav.") for n in fv.names)
        full = extract_epoch_features(ep)
        kept = [n for n in full.names if not n.startswith("wav.")]
        assert fv.names == kept

    def test_constant_channel_missing_markers(self, rng):
        samples = np.column_stack([np.zeros(900), rng.normal(size=900)])
        ep = Epoch(samples=samples, fs=FS, label="familiar")
        fv = extract_epoch_features(ep, on_undefined="nan")
        assert fv.missing
        assert all(".c00" in m or "c00-" in m or "-c00" in m for m in fv.missing)
        with pytest.raises(UndefinedFeatureError):
            extract_epoch_features(ep, on_undefined="raise")

    def test_scale_invariance_of_vector(self, rng):
        ep = noise_epoch(rng, channels=2)
        scaled = Epoch(samples=2.0 * ep.samples, fs=ep.fs, label=ep.label)
        a = extract_epoch_features(ep)
        b = extract_epoch_features(scaled)
        for name, va, vb in zip(a.names, a.values, b.values):
            if name.split(".")[0] in ("rsp", "swi", "corr"):
                assert vb == pytest.approx(va, rel=1e-9), name
            elif name.startswith("time.activity"):
                assert vb == pytest.approx(4.0 * va, rel=1e-9), name
            elif ".sfc." in name:
                assert vb == pytest.approx(4.0 * va, rel=1e-9), name

    def test_correlation_matrix_psd(self, rng):
        ep = noise_epoch(rng, channels=6)
        pairs = all_channel_pairs(6)
        r = channel_correlations(ep.samples, pairs)
        m = np.eye(6)
        for (i, j), v in zip(pairs, r):
            m[i, j] = m[j, i] = v
        assert np.min(np.linalg.eigvalsh(m)) >= -1e-9

    def test_feature_channel_parsing(self):
        assert feature_channels("rsp.Alpha1.Fp1") == ("Fp1",)
        assert feature_channels("corr.Fp1-O2") == ("Fp1", "O2")

    def test_feature_vector_validation(self):
        with pytest.raises(ParameterError):
            FeatureVector(names=["a", "a"], values=np.zeros(2), missing=[])
