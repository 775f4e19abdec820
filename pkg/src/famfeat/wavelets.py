"""Orthogonal multilevel discrete wavelet transform.

Analysis filters are orthonormal Daubechies scaling filters; the transform
uses circular (periodized) convolution so that coefficient energy equals
signal energy to machine precision. Signals are zero-padded up to the next
multiple of 2**levels, which leaves their energy untouched.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

# Orthonormal scaling (low-pass) filters, indexed by vanishing moments.
_DAUBECHIES = {
    "db1": [0.7071067811865476, 0.7071067811865476],
    "db2": [
        0.48296291314469025, 0.836516303737469,
        0.22414386804185735, -0.12940952255092145,
    ],
    "db4": [
        0.23037781330885523, 0.7148465705525415,
        0.6308807679295904, -0.02798376941698385,
        -0.18703481171888114, 0.030841381835986965,
        0.032883011666982945, -0.010597401784997278,
    ],
    "db8": [
        0.05441584224308161, 0.3128715909144659,
        0.6756307362980128, 0.5853546836548691,
        -0.015829105256023893, -0.2840155429624281,
        0.00047248457399797254, 0.128747426620186,
        -0.01736930100202211, -0.04408825393106472,
        0.013981027917015516, 0.008746094047015655,
        -0.00487035299301066, -0.0003917403729959771,
        0.0006754494059985568, -0.00011747678400228192,
    ],
}


def scaling_filter(wavelet: str) -> np.ndarray:
    try:
        h = np.asarray(_DAUBECHIES[wavelet], dtype=float)
    except KeyError:
        raise ParameterError(
            f"unknown wavelet {wavelet!r}; available: {sorted(_DAUBECHIES)}"
        ) from None
    # renormalize so the tabulated values are orthonormal to machine precision
    return h / np.linalg.norm(h)


def quadrature_mirror(h: np.ndarray) -> np.ndarray:
    """High-pass filter paired with scaling filter ``h``: g[k] = (-1)^k h[L-1-k]."""
    g = h[::-1].copy()
    g[::2] *= -1.0
    return g


def _analysis_step(x: np.ndarray, h: np.ndarray, g: np.ndarray):
    n = x.shape[0]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.shape[0])[None, :]) % n
    windows = x[idx]
    return windows @ h, windows @ g


def wavedec(x: np.ndarray, wavelet: str = "db4", levels: int = 6):
    """Multilevel periodized analysis.

    Returns ``(approx, details)`` where ``details[0]`` is the finest level
    (highest frequencies) and ``details[levels-1]`` the coarsest.
    """
    x = np.asarray(x, dtype=float).ravel()
    if levels < 1:
        raise ParameterError("levels must be >= 1")
    if x.shape[0] < (1 << levels):
        raise ParameterError(
            f"signal of {x.shape[0]} samples too short for {levels} levels"
        )
    h = scaling_filter(wavelet)
    g = quadrature_mirror(h)
    pad = (-x.shape[0]) % (1 << levels)
    if pad:
        x = np.concatenate([x, np.zeros(pad)])
    details = []
    approx = x
    for _ in range(levels):
        approx, d = _analysis_step(approx, h, g)
        details.append(d)
    return approx, details


def coefficient_energy(approx: np.ndarray, details) -> float:
    return float(np.sum(approx**2) + sum(float(np.sum(d**2)) for d in details))


def band_groups(x: np.ndarray, fs: float, wavelet: str = "db4") -> dict[str, np.ndarray]:
    """Coefficient groups for the four low-frequency analysis bands.

    A six-level split of an fs around 500 Hz leaves the final approximation
    and the three coarsest detail bands covering roughly (0-4), (4-8),
    (8-16) and (16-31) Hz. Rates outside 384-640 Hz would shift those
    ranges off target and are rejected.
    """
    if not 384.0 <= fs <= 640.0:
        raise ParameterError(
            f"fs={fs} gives a dyadic split misaligned with the 0-4/4-8/8-16/16-31 Hz bands"
        )
    approx, details = wavedec(x, wavelet=wavelet, levels=6)
    return {
        "b0_4": approx,       # final approximation, (0, fs/128)
        "b4_8": details[5],   # (fs/128, fs/64)
        "b8_16": details[4],  # (fs/64, fs/32)
        "b16_31": details[3],  # (fs/32, fs/16)
    }


WAVELET_BAND_ORDER = ("b0_4", "b4_8", "b8_16", "b16_31")
