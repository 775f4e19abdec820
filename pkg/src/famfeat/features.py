"""Per-epoch feature families and the assembled named feature vector.

Five families are computed per channel: statistical-time descriptors
(skewness, kurtosis and the activity/mobility/complexity trio), spectral
summary frequencies plus relative sub-band powers and slow-wave indices,
harmonic parameters per parent band, and wavelet coefficient moments;
channel-pair correlations complete the vector.

Feature names are deterministic:

    time.<stat>.<ch>            freq.<mode|median|mean>.<ch>
    rsp.<SubBand>.<ch>          swi.<dsi|tsi|asi>.<ch>
    harm.<band>.<fc|fsigma|sfc>.<ch>
    wav.<band>.<stat>.<ch>      corr.<chA>-<chB>
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal as _sig

from .bands import DEFAULT_BAND_PLAN, PARENT_ORDER, BandPlan
from .errors import ParameterError, UndefinedFeatureError
from .preprocess import Epoch
from .wavelets import WAVELET_BAND_ORDER, band_groups

DEFAULT_SEGMENT_LEN = 900

# mask tolerance when assigning PSD grid points to half-open (lo, hi] bands
_EDGE_EPS = 1e-9

# toggle groups: "frequency" covers the freq/rsp/swi name prefixes
FAMILY_TOGGLES = ("statistical_time", "frequency", "harmonic", "wavelet", "correlation")

TIME_STAT_ORDER = ("skewness", "kurtosis", "activity", "mobility", "complexity")
FREQ_STAT_ORDER = ("mode", "median", "mean")
SWI_ORDER = ("dsi", "tsi", "asi")
HARM_STAT_ORDER = ("fc", "fsigma", "sfc")
WAVELET_STAT_ORDER = ("mean", "std", "skew", "kurt")


def central_moment(x: np.ndarray, k: int) -> float:
    """k-th central moment (1/n) * sum((x - mean)^k)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ParameterError("central moment of an empty signal")
    if k < 1:
        raise ParameterError("moment order must be >= 1")
    d = x - x.mean()
    return float(np.mean(d**k))


class TimeFeatures(NamedTuple):
    skewness: float
    kurtosis: float
    activity: float
    mobility: float
    complexity: float


def statistical_time_features(x: np.ndarray, fs: float) -> TimeFeatures:
    """Skewness, non-excess kurtosis, and the activity/mobility/complexity trio.

    The derivative is the first difference scaled by ``fs``, so the mobility
    of a sinusoid at frequency f approaches its angular frequency 2*pi*f.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 3:
        raise ParameterError("need at least 3 samples")
    m2 = central_moment(x, 2)
    if m2 == 0.0:
        raise UndefinedFeatureError("constant signal has undefined moments", feature="time")
    m3 = central_moment(x, 3)
    m4 = central_moment(x, 4)
    skewness = m3 / (m2 * np.sqrt(m2))
    kurtosis = m4 / (m2 * m2)
    dx = np.diff(x) * fs
    var_dx = float(np.var(dx))
    mobility = float(np.sqrt(var_dx / m2))
    if var_dx == 0.0:
        raise UndefinedFeatureError(
            "signal with constant derivative has undefined complexity",
            feature="complexity",
        )
    ddx = np.diff(dx) * fs
    complexity = float(np.sqrt(np.var(ddx) / var_dx)) / mobility
    return TimeFeatures(float(skewness), float(kurtosis), m2, mobility, complexity)


@dataclass(frozen=True)
class Psd:
    """One-sided power spectral density estimate on a regular grid."""

    freqs: np.ndarray
    power: np.ndarray
    resolution: float

    def __post_init__(self):
        if self.freqs.shape != self.power.shape:
            raise ParameterError("freqs and power must have equal length")
        if np.any(np.diff(self.freqs) <= 0):
            raise ParameterError("frequency grid must be strictly increasing")
        if np.any(self.power < 0):
            raise ParameterError("power density must be nonnegative")

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power) * self.resolution)


def estimate_psd(
    x: np.ndarray,
    fs: float,
    segment_len: int | None = None,
    overlap: float = 0.5,
) -> Psd:
    """Averaged-periodogram (Hann window, 50% overlap) density estimate.

    ``segment_len`` defaults to min(len(x), 900); an explicit segment longer
    than the signal is an error. The density integrates to the detrended
    signal variance (Parseval) up to windowing effects.
    """
    x = np.asarray(x, dtype=float).ravel()
    if segment_len is None:
        segment_len = min(x.shape[0], DEFAULT_SEGMENT_LEN)
    if segment_len < 8:
        raise ParameterError("segment length must be at least 8 samples")
    if x.shape[0] < segment_len:
        raise ParameterError(
            f"signal of {x.shape[0]} samples shorter than one {segment_len}-sample segment"
        )
    freqs, power = _sig.welch(
        x,
        fs=fs,
        window="hann",
        nperseg=segment_len,
        noverlap=int(segment_len * overlap),
        detrend="constant",
        scaling="density",
    )
    return Psd(freqs=freqs, power=power, resolution=float(freqs[1] - freqs[0]))


class SpectralFrequencies(NamedTuple):
    mode: float
    median: float
    mean: float


def spectral_frequency_features(psd: Psd) -> SpectralFrequencies:
    """Mode, median and mean frequency of a density estimate."""
    total = float(np.sum(psd.power))
    if total <= 0:
        raise UndefinedFeatureError("spectral features of a zero spectrum", feature="freq")
    mode = float(psd.freqs[int(np.argmax(psd.power))])
    cum = np.cumsum(psd.power)
    median = float(psd.freqs[int(np.searchsorted(cum, total / 2.0))])
    mean = float(np.sum(psd.freqs * psd.power) / total)
    return SpectralFrequencies(mode, median, mean)


def _band_mask(freqs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # half-open (lo, hi] with a small tolerance keeps adjacent bands disjoint
    return (freqs > lo + _EDGE_EPS) & (freqs <= hi + _EDGE_EPS)


def band_powers(psd: Psd, plan: BandPlan = DEFAULT_BAND_PLAN):
    """Absolute and relative spectral power per sub-band.

    Sub-bands partition the full analysis band, so relative powers sum to
    one exactly (up to rounding) whenever the epoch has in-band power.
    """
    lo_full, hi_full = plan.full_band
    if psd.freqs[0] > lo_full or psd.freqs[-1] < hi_full:
        raise ParameterError(
            f"PSD grid [{psd.freqs[0]}, {psd.freqs[-1]}] does not cover the plan"
        )
    absolute: dict[str, float] = {}
    for band in plan.sub_bands:
        mask = _band_mask(psd.freqs, band.lo, band.hi)
        absolute[band.name] = float(np.sum(psd.power[mask]) * psd.resolution)
    total = sum(absolute.values())
    if total <= 0:
        raise UndefinedFeatureError("no in-band power; relative power undefined", feature="rsp")
    relative = {name: p / total for name, p in absolute.items()}
    return absolute, relative


def parent_band_powers(
    absolute: dict[str, float], plan: BandPlan = DEFAULT_BAND_PLAN
) -> dict[str, float]:
    """Sum sub-band powers up to their parent bands."""
    out = {p: 0.0 for p in PARENT_ORDER}
    for band in plan.sub_bands:
        out[band.parent] += absolute[band.name]
    return out


class SlowWaveIndices(NamedTuple):
    dsi: float
    tsi: float
    asi: float


def slow_wave_indices(delta: float, theta: float, alpha: float) -> SlowWaveIndices:
    """Slow-wave indices: each parent-band power over the sum of the other two."""
    if min(delta, theta, alpha) < 0:
        raise ParameterError("band powers must be nonnegative")
    denoms = {"dsi": theta + alpha, "tsi": delta + alpha, "asi": delta + theta}
    dead = [name for name, d in denoms.items() if d <= 0]
    if dead:
        raise UndefinedFeatureError(
            f"zero denominator for {', '.join(n.upper() for n in dead)}",
            feature=dead[0],
        )
    return SlowWaveIndices(
        dsi=delta / denoms["dsi"],
        tsi=theta / denoms["tsi"],
        asi=alpha / denoms["asi"],
    )


class HarmonicParameters(NamedTuple):
    fc: float
    fsigma: float
    sfc: float


def harmonic_parameters(psd: Psd, band: tuple[float, float]) -> HarmonicParameters:
    """Spectral centroid, spread and density at the centroid within ``band``."""
    lo, hi = band
    if lo >= hi:
        raise ParameterError(f"band ({lo}, {hi}) is empty")
    if psd.freqs[0] > lo or psd.freqs[-1] < hi:
        raise ParameterError(f"band ({lo}, {hi}) outside the PSD grid")
    mask = _band_mask(psd.freqs, lo, hi)
    p = psd.power[mask]
    f = psd.freqs[mask]
    total = float(np.sum(p))
    if total <= 0:
        raise UndefinedFeatureError(f"zero power in band ({lo}, {hi})", feature="harm")
    fc = float(np.sum(f * p) / total)
    fsigma = float(np.sqrt(np.sum((f - fc) ** 2 * p) / total))
    sfc = float(psd.power[int(np.argmin(np.abs(psd.freqs - fc)))])
    return HarmonicParameters(fc, fsigma, sfc)


def _coefficient_stats(coeffs: np.ndarray, kind: str, band: str):
    mean = float(np.mean(coeffs))
    m2 = float(np.mean((coeffs - mean) ** 2))
    m3 = float(np.mean((coeffs - mean) ** 3))
    m4 = float(np.mean((coeffs - mean) ** 4))
    if kind == "central":
        return mean, m2, m3, m4
    std = float(np.sqrt(m2))
    if m2 == 0.0:
        raise UndefinedFeatureError(
            f"constant wavelet coefficients in {band}; standardized moments undefined",
            feature=f"wav.{band}",
        )
    return mean, std, m3 / (m2 * std), m4 / (m2 * m2)


def dwt_band_moments(
    x: np.ndarray,
    fs: float,
    wavelet: str = "db4",
    stats: str = "standardized",
    on_undefined: str = "raise",
) -> np.ndarray:
    """Four moments of the wavelet coefficients in each of the four bands.

    Band-major, statistic-minor order: for each of (0-4), (4-8), (8-16) and
    (16-31) Hz the mean, standard deviation, skewness and kurtosis of the
    coefficients (raw central moments when ``stats='central'``). With
    ``on_undefined='nan'`` degenerate standardized moments come back as NaN
    instead of raising.
    """
    if stats not in ("standardized", "central"):
        raise ParameterError(f"unknown stats mode {stats!r}")
    groups = band_groups(x, fs, wavelet=wavelet)
    values: list[float] = []
    for band in WAVELET_BAND_ORDER:
        try:
            values.extend(_coefficient_stats(groups[band], stats, band))
        except UndefinedFeatureError:
            if on_undefined != "nan":
                raise
            coeffs = groups[band]
            values.extend((float(np.mean(coeffs)), float(np.std(coeffs)), np.nan, np.nan))
    return np.asarray(values, dtype=float)


def channel_correlations(samples: np.ndarray, pairs) -> np.ndarray:
    """Pearson correlation of each requested channel pair."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ParameterError("samples must be time x channel")
    n_ch = samples.shape[1]
    centered = samples - samples.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    out = np.empty(len(pairs))
    for idx, (i, j) in enumerate(pairs):
        if not (0 <= i < n_ch and 0 <= j < n_ch):
            raise ParameterError(f"channel pair ({i}, {j}) out of range")
        for c in (i, j):
            if norms[c] == 0:
                raise UndefinedFeatureError(
                    f"channel {c} is constant; correlation undefined", feature=f"corr.{c}"
                )
        r = float(centered[:, i] @ centered[:, j]) / (norms[i] * norms[j])
        out[idx] = min(1.0, max(-1.0, r))
    return out


@dataclass
class FeatureVector:
    """Named feature values for one epoch; names and values stay parallel."""

    names: list[str]
    values: np.ndarray
    missing: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.names) != self.values.shape[0]:
            raise ParameterError("names and values must be parallel")
        if len(set(self.names)) != len(self.names):
            raise ParameterError("feature names must be unique")

    def require_finite(self):
        if self.missing or not np.all(np.isfinite(self.values)):
            raise UndefinedFeatureError(
                f"undefined features present: {self.missing}", feature=str(self.missing)
            )


def all_channel_pairs(n_channels: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_channels) for j in range(i + 1, n_channels)]


def feature_family(name: str) -> str:
    """Coarse family of a feature name, as used in the distribution reports."""
    prefix = name.split(".", 1)[0]
    family = {
        "time": "statistical_time",
        "freq": "frequency",
        "rsp": "frequency",
        "swi": "frequency",
        "harm": "harmonic",
        "wav": "wavelet",
        "corr": "correlation",
    }.get(prefix)
    if family is None:
        raise ParameterError(f"feature name {name!r} has no known family")
    return family


def feature_channels(name: str) -> tuple[str, ...]:
    """Channel (or channel pair) a feature name refers to."""
    parts = name.split(".")
    if parts[0] == "corr":
        return tuple(parts[1].split("-"))
    return (parts[-1],)


class _Emitter:
    """Accumulates (name, value) pairs, turning undefined groups into NaNs."""

    def __init__(self, on_undefined: str):
        self.on_undefined = on_undefined
        self.names: list[str] = []
        self.values: list[float] = []
        self.missing: list[str] = []

    def group(self, names: list[str], compute):
        try:
            vals = list(compute())
        except UndefinedFeatureError as err:
            if self.on_undefined == "raise":
                raise UndefinedFeatureError(f"{names[0]}: {err}", feature=names[0]) from err
            vals = [np.nan] * len(names)
        if len(vals) != len(names):
            raise ParameterError("feature group size mismatch")
        for name, v in zip(names, vals):
            self.names.append(name)
            v = float(v)
            self.values.append(v)
            if not np.isfinite(v):
                self.missing.append(name)


def extract_epoch_features(
    ep: Epoch,
    plan: BandPlan = DEFAULT_BAND_PLAN,
    channel_names: list[str] | None = None,
    families: dict[str, bool] | None = None,
    pairs: list[tuple[int, int]] | None = None,
    wavelet: str = "db4",
    wavelet_stats: str = "standardized",
    psd_segment_len: int | None = None,
    on_undefined: str = "raise",
) -> FeatureVector:
    """Assemble the full named feature vector of one epoch.

    Per channel: 5 statistical-time + 3 spectral frequencies + 10 relative
    sub-band powers + 3 slow-wave indices + 15 harmonic parameters (4
    parent bands + full band) + 16 wavelet moments = 52, followed by one
    correlation per channel pair (all pairs by default); 21 channels with
    all 210 pairs give 1302 features.

    ``on_undefined='nan'`` records undefined values as NaN and lists their
    names in ``missing`` instead of raising.
    """
    if on_undefined not in ("raise", "nan"):
        raise ParameterError(f"unknown on_undefined mode {on_undefined!r}")
    n_ch = ep.n_channels
    if channel_names is None:
        channel_names = [f"c{i:02d}" for i in range(n_ch)]
    if len(channel_names) != n_ch:
        raise ParameterError(f"{len(channel_names)} names for {n_ch} channels")
    enabled = {t: True for t in FAMILY_TOGGLES}
    if families:
        unknown = set(families) - set(FAMILY_TOGGLES)
        if unknown:
            raise ParameterError(f"unknown feature families: {sorted(unknown)}")
        enabled.update(families)
    if pairs is None:
        pairs = all_channel_pairs(n_ch)

    emit = _Emitter(on_undefined)
    parent_range = plan.parent_ranges()
    harm_bands = [(p, parent_range[p]) for p in PARENT_ORDER] + [("full", plan.full_band)]

    for ch in range(n_ch):
        x = ep.samples[:, ch]
        label = channel_names[ch]

        if enabled["statistical_time"]:
            emit.group(
                [f"time.{s}.{label}" for s in TIME_STAT_ORDER],
                lambda x=x: statistical_time_features(x, ep.fs),
            )

        psd = None
        if enabled["frequency"] or enabled["harmonic"]:
            psd = estimate_psd(x, ep.fs, segment_len=psd_segment_len)

        if enabled["frequency"]:
            emit.group(
                [f"freq.{s}.{label}" for s in FREQ_STAT_ORDER],
                lambda psd=psd: spectral_frequency_features(psd),
            )

            def rsp_and_swi(psd=psd):
                absolute, relative = band_powers(psd, plan)
                parents = parent_band_powers(absolute, plan)
                swi = slow_wave_indices(parents["delta"], parents["theta"], parents["alpha"])
                return [relative[b.name] for b in plan.sub_bands] + list(swi)

            emit.group(
                [f"rsp.{b.name}.{label}" for b in plan.sub_bands]
                + [f"swi.{s}.{label}" for s in SWI_ORDER],
                rsp_and_swi,
            )

        if enabled["harmonic"]:
            for band_name, band in harm_bands:
                emit.group(
                    [f"harm.{band_name}.{s}.{label}" for s in HARM_STAT_ORDER],
                    lambda psd=psd, band=band: harmonic_parameters(psd, band),
                )

        if enabled["wavelet"]:
            wav = dwt_band_moments(
                x, ep.fs, wavelet=wavelet, stats=wavelet_stats, on_undefined="nan"
            )
            wav_names = [
                f"wav.{band}.{stat}.{label}"
                for band in WAVELET_BAND_ORDER
                for stat in WAVELET_STAT_ORDER
            ]
            if on_undefined == "raise" and not np.all(np.isfinite(wav)):
                bad = wav_names[int(np.flatnonzero(~np.isfinite(wav))[0])]
                raise UndefinedFeatureError(f"{bad}: standardized moment undefined", feature=bad)
            emit.group(wav_names, lambda wav=wav: wav)

    if enabled["correlation"]:
        for (i, j) in pairs:
            emit.group(
                [f"corr.{channel_names[i]}-{channel_names[j]}"],
                lambda i=i, j=j: channel_correlations(ep.samples, [(i, j)]),
            )

    return FeatureVector(names=emit.names, values=np.asarray(emit.values), missing=emit.missing)


def per_channel_feature_count(families: dict[str, bool] | None = None) -> int:
    enabled = {t: True for t in FAMILY_TOGGLES}
    if families:
        enabled.update(families)
    n = 0
    if enabled["statistical_time"]:
        n += len(TIME_STAT_ORDER)
    if enabled["frequency"]:
        n += len(FREQ_STAT_ORDER) + 10 + len(SWI_ORDER)
    if enabled["harmonic"]:
        n += 15
    if enabled["wavelet"]:
        n += 16
    return n
