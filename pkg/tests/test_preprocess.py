import numpy as np
import pytest
from scipy import signal as sps

from famfeat.errors import ConvergenceError, ParameterError, RankError
from famfeat.preprocess import (
    Epoch,
    IcaDecomposition,
    Recording,
    auto_flag_eog,
    bandpass_filter,
    design_bandpass,
    epoch_sample_count,
    ica_decompose,
    remove_components,
    slice_epochs,
)

import oracles
from conftest import FS, make_recording, tone


class TestRecordingInvariants:
    def test_valid_construction(self, rng):
        rec = make_recording(rng.normal(size=(3000, 3)), onsets=[0, 500])
        assert rec.n_samples == 3000
        assert rec.n_channels == 3

    def test_duplicate_channel_names_rejected(self, rng):
        with pytest.raises(ParameterError):
            make_recording(rng.normal(size=(3000, 2)), names=["a", "a"])

    def test_onset_too_close_to_end_rejected(self, rng):
        with pytest.raises(ParameterError):
            make_recording(rng.normal(size=(3000, 2)), onsets=[2500])

    def test_nonpositive_fs_rejected(self, rng):
        with pytest.raises(ParameterError):
            Recording(channels=["a"], samples=rng.normal(size=(100, 1)), fs=0.0)


class TestBandpassFilter:
    def test_10hz_tone_passes_unchanged(self):
        # amplitude within 1% and phase shift < 0.01 rad, against a direct fit
        x = tone(10.0, n=5000)
        rec = make_recording(x[:, None])
        out = bandpass_filter(rec, 0.5, 35.0)
        amp, phase = oracles.fit_sinusoid(out.samples[:, 0], FS, 10.0)
        assert abs(amp - 1.0) < 0.01
        assert abs(phase) < 0.01

    def test_50hz_tone_attenuated(self):
        x = tone(50.0, n=5000)
        rec = make_recording(x[:, None])
        out = bandpass_filter(rec, 0.5, 35.0)
        assert oracles.rms(out.samples[:, 0]) <= 0.1 * oracles.rms(x)

    def test_zero_signal_stays_zero(self):
        rec = make_recording(np.zeros((2000, 2)))
        out = bandpass_filter(rec, 0.5, 35.0)
        assert np.all(out.samples == 0)

    def test_magnitude_contract(self):
        # +-1 dB over (lo + 0.5, hi - 2); >= 20 dB down at 50 Hz, end to end
        sos = design_bandpass(0.5, 35.0, FS)
        freqs = np.linspace(1.0, 33.0, 200)
        w, h = sps.sosfreqz(sos, worN=freqs, fs=FS)
        gain_db = 20 * np.log10(np.abs(h) ** 2)  # forward-backward pass
        assert np.all(np.abs(gain_db) <= 1.0 + 1e-6)
        w, h = sps.sosfreqz(sos, worN=[50.0], fs=FS)
        assert 20 * np.log10(np.abs(h[0]) ** 2) <= -20.0

    def test_linearity(self, rng):
        x = rng.normal(size=(3000, 1))
        y = rng.normal(size=(3000, 1))
        a, b = 2.5, -1.3
        fx = bandpass_filter(make_recording(x), 0.5, 35.0).samples
        fy = bandpass_filter(make_recording(y), 0.5, 35.0).samples
        fxy = bandpass_filter(make_recording(a * x + b * y), 0.5, 35.0).samples
        scale = np.max(np.abs(fxy))
        assert np.max(np.abs(fxy - (a * fx + b * fy))) < 1e-9 * scale

    def test_zero_phase_no_lag(self):
        # cross-correlation peak between an in-band burst and its filtered
        # version sits at lag zero
        n = 4000
        t = np.arange(n) / FS
        burst = np.sin(2 * np.pi * 12 * t) * np.exp(-((t - 4.0) ** 2) / 0.1)
        out = bandpass_filter(make_recording(burst[:, None]), 0.5, 35.0).samples[:, 0]
        corr = np.correlate(out, burst, mode="full")
        assert int(np.argmax(corr)) - (n - 1) == 0

    def test_invalid_edges_rejected(self):
        rec = make_recording(np.zeros((2000, 1)))
        with pytest.raises(ParameterError):
            bandpass_filter(rec, 35.0, 0.5)
        with pytest.raises(ParameterError):
            bandpass_filter(rec, 0.5, 300.0)  # above Nyquist


class TestSliceEpochs:
    def test_window_indices_at_500hz(self, rng):
        samples = rng.normal(size=(4000, 2))
        rec = make_recording(samples, onsets=[1000])
        eps = slice_epochs(rec, ["familiar"])
        assert len(eps) == 1
        assert eps[0].n_samples == 900
        # 0.2-2.0 s window after onset 1000: samples [1100, 2000)
        assert np.array_equal(eps[0].samples, samples[1100:2000])

    def test_length_scales_with_fs(self, rng):
        samples = rng.normal(size=(600, 1))
        rec = make_recording(samples, fs=250.0, onsets=[0])
        eps = slice_epochs(rec, ["unfamiliar"])
        assert eps[0].n_samples == 450
        assert epoch_sample_count(250.0) == 450

    def test_out_of_range_onset_named_at_construction(self, rng):
        # recordings reject onsets that cannot hold a full epoch window
        samples = rng.normal(size=(4000, 1))
        with pytest.raises(ParameterError, match="3900"):
            make_recording(samples, onsets=[100, 3900])

    def test_out_of_range_onset_named_at_slice_time(self, rng):
        samples = rng.normal(size=(4000, 1))
        rec = make_recording(samples, onsets=[100, 2995])
        # a wider window than the recording was validated for must fail
        # per-onset, naming the offender
        with pytest.raises(ParameterError, match="2995"):
            slice_epochs(rec, ["familiar", "familiar"], end_s=2.5)

    def test_label_count_mismatch(self, rng):
        rec = make_recording(rng.normal(size=(4000, 1)), onsets=[0])
        with pytest.raises(ParameterError):
            slice_epochs(rec, [])

    def test_epoch_count_matches_onsets(self, rng):
        onsets = [0, 1100, 2200]
        rec = make_recording(rng.normal(size=(4000, 1)), onsets=onsets)
        eps = slice_epochs(rec, ["unfamiliar"] * 3)
        assert len(eps) == 3
        assert all(e.n_samples == 900 for e in eps)

    def test_bad_label_rejected(self, rng):
        rec = make_recording(rng.normal(size=(4000, 1)), onsets=[0])
        with pytest.raises(ParameterError):
            slice_epochs(rec, ["mystery"])


def _mixture_recording(rng, n=6000):
    t = np.arange(n) / FS
    s1 = np.sin(2 * np.pi * 10 * t)
    s2 = rng.uniform(-1, 1, size=n)
    sources = np.column_stack([s1, s2])
    mixing = np.array([[1.0, 0.6], [0.4, 1.0]])
    return make_recording(sources @ mixing.T), sources


class TestIca:
    def test_recovers_known_mixture(self, rng):
        rec, sources = _mixture_recording(rng)
        dec = ica_decompose(rec, seed=3)
        # each recovered source matches exactly one true source, |r| > 0.95
        hits = []
        for j in range(2):
            rs = [abs(oracles.pearson_direct(dec.sources[:, j], sources[:, k])) for k in range(2)]
            assert max(rs) > 0.95
            assert min(rs) < 0.5
            hits.append(int(np.argmax(rs)))
        assert sorted(hits) == [0, 1]

    def test_independent_input_gives_permutation_like_mixing(self, rng):
        n = 6000
        t = np.arange(n) / FS
        x = np.column_stack([np.sin(2 * np.pi * 10 * t), rng.uniform(-1, 1, size=n)])
        dec = ica_decompose(make_recording(x), seed=1)
        for axis in (0, 1):
            norms = np.linalg.norm(dec.mixing, axis=axis)
            dominant = np.max(np.abs(dec.mixing), axis=axis)
            assert np.all(dominant > 0.9 * norms)

    def test_duplicated_channel_raises(self, rng):
        x = rng.normal(size=(3000, 1))
        rec = make_recording(np.column_stack([x, x]))
        with pytest.raises((RankError, ConvergenceError)):
            ica_decompose(rec, n_components=2, seed=0)

    def test_deterministic_under_seed(self, rng):
        rec, _ = _mixture_recording(rng)
        d1 = ica_decompose(rec, seed=7)
        d2 = ica_decompose(rec, seed=7)
        assert np.array_equal(d1.unmixing, d2.unmixing)
        assert np.array_equal(d1.sources, d2.sources)

    def test_unmixing_rows_orthonormal(self, rng):
        rec, _ = _mixture_recording(rng)
        dec = ica_decompose(rec, seed=5)
        gram = dec.unmixing @ dec.unmixing.T
        assert np.max(np.abs(gram - np.eye(dec.n_components))) < 1e-6

    def test_too_few_samples_rejected(self, rng):
        # below the 10-samples-per-channel floor
        with pytest.raises(ParameterError):
            ica_decompose(make_recording(rng.normal(size=(25, 3))))


class TestRemoveComponents:
    def test_empty_set_is_identity(self, rng):
        rec, _ = _mixture_recording(rng)
        dec = ica_decompose(rec, seed=2)
        out = remove_components(rec, dec, set())
        scale = np.max(np.abs(rec.samples))
        assert np.max(np.abs(out.samples - rec.samples)) < 1e-6 * scale

    def test_remove_all_zeroes_zero_mean_recording(self, rng):
        rec, _ = _mixture_recording(rng)
        rec = make_recording(rec.samples - rec.samples.mean(axis=0))
        dec = ica_decompose(rec, seed=2)
        out = remove_components(rec, dec, {0, 1})
        assert np.max(np.abs(out.samples)) < 1e-6 * np.max(np.abs(rec.samples))

    def test_removing_planted_blink_decorrelates(self, rng):
        n = 6000
        t = np.arange(n) / FS
        # smooth periodic blink-like pulses, large against the background
        blink = 3.0 * sum(
            np.exp(-((t - c) ** 2) / (2 * 0.05**2)) for c in np.arange(0.5, 11.5, 1.0)
        )
        brain1 = np.sin(2 * np.pi * 9 * t)
        brain2 = rng.normal(size=n)
        sources = np.column_stack([blink, brain1, brain2])
        mixing = np.array([[1.0, 0.5, 0.3], [0.8, 1.0, 0.2], [0.6, 0.3, 1.0]])
        rec = make_recording(sources @ mixing.T)
        before = max(
            abs(oracles.pearson_direct(rec.samples[:, c], blink)) for c in range(3)
        )
        assert before > 0.8
        dec = ica_decompose(rec, seed=4)
        flags = auto_flag_eog(dec, blink, threshold=0.7)
        assert len(flags) == 1
        cleaned = remove_components(rec, dec, flags)
        after = max(
            abs(oracles.pearson_direct(cleaned.samples[:, c], blink)) for c in range(3)
        )
        assert after < 0.2

    def test_out_of_range_index_rejected(self, rng):
        rec, _ = _mixture_recording(rng)
        dec = ica_decompose(rec, seed=2)
        with pytest.raises(ParameterError):
            remove_components(rec, dec, {5})


def _manual_decomposition(sources):
    k = sources.shape[1]
    eye = np.eye(k)
    return IcaDecomposition(
        unmixing=eye,
        mixing=eye.copy(),
        sources=np.asarray(sources, dtype=float),
        removed=set(),
        whitening=eye,
        dewhitening=eye,
        mean=np.zeros(k),
    )


class TestAutoFlagEog:
    def test_eog_itself_flagged(self, rng):
        eog = rng.normal(size=2000)
        dec = _manual_decomposition(np.column_stack([eog, rng.normal(size=2000)]))
        assert auto_flag_eog(dec, eog) == {0}

    def test_uncorrelated_sources_not_flagged(self, rng):
        dec = _manual_decomposition(rng.normal(size=(2000, 3)))
        assert auto_flag_eog(dec, rng.normal(size=2000)) == set()

    def test_two_blink_dominated_components_both_flagged(self, rng):
        blink = rng.normal(size=4000)
        s1 = blink + 0.3 * rng.normal(size=4000)
        s2 = blink + 0.3 * rng.normal(size=4000)
        dec = _manual_decomposition(np.column_stack([s1, s2, rng.normal(size=4000)]))
        assert auto_flag_eog(dec, blink) == {0, 1}

    def test_length_mismatch_rejected(self, rng):
        dec = _manual_decomposition(rng.normal(size=(2000, 2)))
        with pytest.raises(ParameterError):
            auto_flag_eog(dec, rng.normal(size=1999))


class TestIcaRoundTripInvariant:
    def test_reconstruction_identity(self, rng):
        rec = make_recording(rng.normal(size=(4000, 4)) @ np.diag([1.0, 2.0, 0.5, 1.5]))
        dec = ica_decompose(rec, seed=9)
        recon = dec.reconstruct()
        scale = np.max(np.abs(rec.samples))
        assert np.max(np.abs(recon - rec.samples)) < 1e-6 * scale
