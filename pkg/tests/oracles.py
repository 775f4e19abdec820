"""Independent brute-force reference implementations used as test oracles.

Everything here computes quantities directly from their definitions
(explicit summation, dense-grid derivatives, least-squares fits,
permutation tests, exhaustive subset search) without touching the library
code paths under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def moment_direct(x, k: int) -> float:
    """Literal (1/n) * sum((x_i - mean)^k)."""
    x = [float(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    return sum((v - mean) ** k for v in x) / n


def skewness_direct(x) -> float:
    m2 = moment_direct(x, 2)
    m3 = moment_direct(x, 3)
    return m3 / (m2 * math.sqrt(m2))


def kurtosis_direct(x) -> float:
    m2 = moment_direct(x, 2)
    m4 = moment_direct(x, 4)
    return m4 / (m2 * m2)


def variance_direct(x) -> float:
    return moment_direct(x, 2)


def mobility_dense_sine(f: float, fs_dense: float = 100_000.0, duration: float = 2.0) -> float:
    """Mobility of a sinusoid via numerical differentiation on a dense grid."""
    t = np.arange(int(duration * fs_dense)) / fs_dense
    x = np.sin(2 * np.pi * f * t)
    dx = np.gradient(x, 1.0 / fs_dense)
    return float(np.sqrt(np.var(dx) / np.var(x)))


def fit_sinusoid(x, fs: float, f: float):
    """Least-squares amplitude and phase of a known-frequency sinusoid."""
    t = np.arange(len(x)) / fs
    design = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    (a, b), *_ = np.linalg.lstsq(design, np.asarray(x, dtype=float), rcond=None)
    amplitude = math.hypot(a, b)
    phase = math.atan2(b, a)  # x ~ A sin(wt + phase)
    return amplitude, phase


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def spectral_mean_direct(freqs, power) -> float:
    num = sum(float(f) * float(p) for f, p in zip(freqs, power))
    den = sum(float(p) for p in power)
    return num / den


def spectral_median_direct(freqs, power) -> float:
    total = sum(float(p) for p in power)
    acc = 0.0
    for f, p in zip(freqs, power):
        acc += float(p)
        if acc >= total / 2.0:
            return float(f)
    return float(freqs[-1])


def band_power_direct(freqs, power, lo: float, hi: float, df: float) -> float:
    """Rectangle-rule power over the half-open band (lo, hi]."""
    acc = 0.0
    for f, p in zip(freqs, power):
        if lo + 1e-9 < f <= hi + 1e-9:
            acc += float(p)
    return acc * df


def harmonic_direct(freqs, power, lo: float, hi: float):
    fs = [float(f) for f, p in zip(freqs, power) if lo + 1e-9 < f <= hi + 1e-9]
    ps = [float(p) for f, p in zip(freqs, power) if lo + 1e-9 < f <= hi + 1e-9]
    total = sum(ps)
    fc = sum(f * p for f, p in zip(fs, ps)) / total
    fsigma = math.sqrt(sum((f - fc) ** 2 * p for f, p in zip(fs, ps)) / total)
    nearest = min(range(len(freqs)), key=lambda i: abs(float(freqs[i]) - fc))
    return fc, fsigma, float(power[nearest])


def pearson_direct(a, b) -> float:
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def permutation_pvalue(col, labels, n_perm: int = 2000, seed: int = 0) -> float:
    """Two-sided permutation test on the difference of class means."""
    col = np.asarray(col, dtype=float)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    assert len(classes) == 2
    mask = labels == classes[0]
    observed = abs(col[mask].mean() - col[~mask].mean())
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(col)
        diff = abs(perm[mask].mean() - perm[~mask].mean())
        if diff >= observed:
            hits += 1
    return (hits + 1) / (n_perm + 1)


def fdr_direct(col, labels, squared: bool) -> float:
    col = np.asarray(col, dtype=float)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    a = col[labels == classes[0]]
    b = col[labels == classes[1]]
    num = (a.mean() - b.mean()) ** 2
    den = a.var() + b.var()
    return float(num / den**2) if squared else float(num / den)


def exhaustive_best_subset(pool, size: int, evaluator):
    """argmax of the evaluator over every subset of the given size."""
    best_ids = None
    best_score = -np.inf
    for combo in itertools.combinations(sorted(pool), size):
        score = evaluator(combo)
        if score > best_score:
            best_ids, best_score = combo, score
    return set(best_ids), best_score


def greedy_forward_selection(pool, target: int, evaluator):
    """Plain greedy forward selection; returns (ids, final score)."""
    working: list[int] = []
    score = -np.inf
    while len(working) < target:
        candidates = [c for c in pool if c not in working]
        scores = [evaluator(tuple(working) + (c,)) for c in candidates]
        best = max(range(len(candidates)), key=lambda i: (scores[i], -candidates[i]))
        working.append(candidates[best])
        score = scores[best]
    return set(working), score
