"""Seed-driven synthetic recordings and epochs with known spectral content.

Band-limited noise components are realized by band-pass filtering white
noise with the same filters the preprocessing stage uses, so generated
relative band powers land on their targets by construction. Everything is
deterministic in the seed.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import signal as _sig

from .bands import DEFAULT_BAND_PLAN, DEFAULT_CHANNELS
from .errors import ParameterError
from .preprocess import CLASS_LABELS, Epoch, Recording, epoch_sample_count, _filtfilt

_FILTER_PAD = 200


@lru_cache(maxsize=64)
def _subband_sos(lo: float, hi: float, fs: float):
    # steeper skirts than the analysis band-pass, so even narrow sub-bands
    # keep their generated power in place
    nyq = fs / 2.0
    width = hi - lo
    wp = [lo + 0.15 * width, hi - 0.15 * width]
    ws = [max(lo - 0.25 * width, lo * 0.5, 0.05), min(hi + 0.25 * width, 0.98 * nyq)]
    order, wn = _sig.buttord(wp=wp, ws=ws, gpass=1.0, gstop=20.0, fs=fs)
    return _sig.butter(order, wn, btype="bandpass", output="sos", fs=fs)


class ClassSpec(BaseModel):
    """Target relative band-power profile for one class."""

    label: str
    profile: dict[str, float]

    @field_validator("label")
    @classmethod
    def _known_label(cls, v):
        if v not in CLASS_LABELS:
            raise ValueError(f"label must be one of {CLASS_LABELS}")
        return v

    @field_validator("profile")
    @classmethod
    def _valid_profile(cls, v):
        known = set(DEFAULT_BAND_PLAN.names)
        unknown = set(v) - known
        if unknown:
            raise ValueError(f"unknown sub-bands: {sorted(unknown)}")
        if any(w < 0 for w in v.values()):
            raise ValueError("profile weights must be nonnegative")
        total = sum(v.values())
        if total <= 0:
            raise ValueError("profile must have positive total weight")
        if total > 1 + 1e-9:
            raise ValueError("profile weights must sum to at most 1")
        return v


class SynthSpec(BaseModel):
    """Full description of a synthetic labelled dataset."""

    classes: list[ClassSpec] = Field(min_length=1)
    epochs_per_class: int = Field(ge=1)
    channels: int = Field(default=21, ge=1, le=64)
    fs: float = Field(default=500.0)
    noise_floor: float = Field(default=0.05, ge=0.0)
    seed: int = 0
    trials_per_recording: int = Field(default=20, ge=1)

    @field_validator("fs")
    @classmethod
    def _fs_covers_bands(cls, v):
        top = DEFAULT_BAND_PLAN.full_band[1]
        if v <= 2 * top:
            raise ValueError(f"fs must exceed twice the highest band edge ({2 * top})")
        return v

    @model_validator(mode="after")
    def _unique_labels(self):
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique")
        return self


def default_channel_names(n: int) -> list[str]:
    if n == len(DEFAULT_CHANNELS):
        return list(DEFAULT_CHANNELS)
    return [f"c{i:02d}" for i in range(n)]


def _band_noise(rng: np.random.Generator, n: int, fs: float, profile: dict[str, float]) -> np.ndarray:
    """One channel of noise whose relative band powers match ``profile``."""
    bands = {b.name: (b.lo, b.hi) for b in DEFAULT_BAND_PLAN.sub_bands}
    total = n + 2 * _FILTER_PAD
    out = np.zeros(n)
    for name, weight in profile.items():
        if weight <= 0:
            continue
        lo, hi = bands[name]
        sos = _subband_sos(lo, hi, fs)
        component = _filtfilt(sos, rng.normal(size=total))[_FILTER_PAD:_FILTER_PAD + n]
        sd = component.std()
        if sd > 0:
            out += component * (np.sqrt(weight) / sd)
    return out


def synth_tone_epoch(
    f: float,
    amp: float,
    fs: float = 500.0,
    channels: int = 1,
    noise_sd: float = 0.0,
    seed: int = 0,
    label: str = "unfamiliar",
) -> Epoch:
    """Sinusoid of frequency ``f`` (random phase per channel) plus white noise."""
    if not 0 < f < fs / 2:
        raise ParameterError(f"tone frequency {f} outside (0, {fs / 2})")
    n = epoch_sample_count(fs)
    rng = np.random.default_rng([seed, int(f * 1000)])
    t = np.arange(n) / fs
    samples = np.empty((n, channels))
    for ch in range(channels):
        phase = rng.uniform(0, 2 * np.pi)
        samples[:, ch] = amp * np.sin(2 * np.pi * f * t + phase)
        if noise_sd > 0:
            samples[:, ch] += rng.normal(scale=noise_sd, size=n)
    return Epoch(samples=samples, fs=fs, label=label)


def synth_band_noise_epoch(
    profile: dict[str, float],
    fs: float = 500.0,
    channels: int = 1,
    seed: int = 0,
    label: str = "unfamiliar",
    noise_floor: float = 0.0,
    channel_seeds: list[int] | None = None,
) -> Epoch:
    """Epoch of band-limited noise with the given relative power profile.

    Channels are independent by default; passing ``channel_seeds`` pins each
    channel's generator (identical seeds give identical channels).
    """
    if not profile or sum(profile.values()) <= 0:
        raise ParameterError("profile must contain positive band weights")
    unknown = set(profile) - set(DEFAULT_BAND_PLAN.names)
    if unknown:
        raise ParameterError(f"unknown sub-bands: {sorted(unknown)}")
    if channel_seeds is not None and len(channel_seeds) != channels:
        raise ParameterError("one channel seed per channel required")
    n = epoch_sample_count(fs)
    samples = np.empty((n, channels))
    for ch in range(channels):
        rng = np.random.default_rng(
            [seed, ch] if channel_seeds is None else [channel_seeds[ch]]
        )
        x = _band_noise(rng, n, fs, profile)
        if noise_floor > 0:
            x = x + rng.normal(scale=noise_floor, size=n)
        samples[:, ch] = x
    return Epoch(samples=samples, fs=fs, label=label)


def synth_labelled_dataset(spec: SynthSpec) -> list[Epoch]:
    """Labelled epochs drawn from each class profile, shuffled by seed."""
    epochs = []
    for ci, cls in enumerate(spec.classes):
        for trial in range(spec.epochs_per_class):
            epochs.append(
                synth_band_noise_epoch(
                    cls.profile,
                    fs=spec.fs,
                    channels=spec.channels,
                    label=cls.label,
                    noise_floor=spec.noise_floor,
                    channel_seeds=[
                        hash_seed(spec.seed, ci, trial, ch) for ch in range(spec.channels)
                    ],
                )
            )
    order = np.random.default_rng(spec.seed).permutation(len(epochs))
    return [epochs[i] for i in order]


def hash_seed(*parts: int) -> int:
    """Stable nonnegative seed derived from integer parts."""
    seq = np.random.SeedSequence(entropy=list(int(p) & 0xFFFFFFFF for p in parts))
    return int(seq.generate_state(1)[0])


def synth_recordings(spec: SynthSpec):
    """Continuous recordings with stimulus onsets, ready for preprocessing.

    Trials are laid out back to back, each long enough to contain the full
    post-stimulus epoch window plus margin; per-trial content carries its
    class profile. Returns (channel_names, records) where each record is a
    dict with the recording, per-onset labels and a subject id.
    """
    n_epoch_end = int(np.ceil(2.0 * spec.fs))
    block = n_epoch_end + int(0.1 * spec.fs)
    labels_all = [c.label for c in spec.classes for _ in range(spec.epochs_per_class)]
    class_idx = [ci for ci, c in enumerate(spec.classes) for _ in range(spec.epochs_per_class)]
    order = np.random.default_rng(spec.seed).permutation(len(labels_all))

    channel_names = default_channel_names(spec.channels)
    records = []
    chunk = spec.trials_per_recording
    for rec_i, start in enumerate(range(0, len(order), chunk)):
        trial_ids = order[start:start + chunk]
        n_samples = block * len(trial_ids)
        samples = np.empty((n_samples, spec.channels))
        onsets = []
        labels = []
        for pos, tid in enumerate(trial_ids):
            ci = class_idx[tid]
            profile = spec.classes[ci].profile
            lo = pos * block
            for ch in range(spec.channels):
                rng = np.random.default_rng(
                    [hash_seed(spec.seed, ci, int(tid), ch)]
                )
                x = _band_noise(rng, block, spec.fs, profile)
                if spec.noise_floor > 0:
                    x = x + rng.normal(scale=spec.noise_floor, size=block)
                samples[lo:lo + block, ch] = x
            onsets.append(lo)
            labels.append(labels_all[tid])
        rec = Recording(
            channels=channel_names,
            samples=samples,
            fs=spec.fs,
            stimulus_onsets=onsets,
            eog_channel=None,
        )
        records.append({"recording": rec, "labels": labels, "subject": f"s{rec_i:02d}"})
    return channel_names, records
