import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from famfeat.preprocess import Epoch, Recording  # noqa: E402

FS = 500.0
EPOCH_LEN = 900


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tone(f, fs=FS, n=EPOCH_LEN, amp=1.0, phase=0.0):
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * f * t + phase)


def tone_epoch(f, channels=1, fs=FS, n=EPOCH_LEN, amp=1.0, label="unfamiliar"):
    samples = np.column_stack([tone(f, fs, n, amp, phase=0.3 * c) for c in range(channels)])
    return Epoch(samples=samples, fs=fs, label=label)


def noise_epoch(rng, channels=1, fs=FS, n=EPOCH_LEN, sd=1.0, label="unfamiliar"):
    return Epoch(samples=rng.normal(scale=sd, size=(n, channels)), fs=fs, label=label)


def make_recording(samples, fs=FS, onsets=(), eog_channel=None, names=None):
    samples = np.asarray(samples, dtype=float)
    if names is None:
        names = [f"c{i:02d}" for i in range(samples.shape[1])]
    return Recording(
        channels=list(names),
        samples=samples,
        fs=fs,
        stimulus_onsets=list(onsets),
        eog_channel=eog_channel,
    )
