"""Soft-margin Gaussian-kernel SVM with pairwise multiclass voting.

The dual problem is solved by sequential pairwise coordinate optimization:
each step updates the maximal-violating pair of coefficients until the
KKT gap falls below tolerance. Training rows are canonicalized (sorted)
internally, so results do not depend on input row order. Distinct pairwise
machines and folds are independent; trained models are immutable.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, ParameterError

log = logging.getLogger(__name__)

KKT_TOL = 1e-3
MAX_ITER = 200_000
_SV_EPS = 1e-12


@njit(cache=True)
def _smo_solve(K, y, C, tol, max_iter):
    """Maximal-violating-pair coordinate ascent on the soft-margin dual.

    Returns (alpha, bias, iterations, kkt_gap). Maintains sum(alpha * y) = 0
    exactly by construction.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # grad_i = y_i * (sum_j alpha_j y_j K_ij) - 1
    it = 0
    while it < max_iter:
        gmax = -1e300
        gmin = 1e300
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * grad[t]
            up = (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0.0)
            down = (y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < C)
            if up and v > gmax:
                gmax = v
                i = t
            if down and v < gmin:
                gmin = v
                j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad < 1e-12:
            quad = 1e-12
        step = (gmax - gmin) / quad
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        if lim_i < step:
            step = lim_i
        if lim_j < step:
            step = lim_j
        if step <= 0.0:
            break
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        for t in range(n):
            grad[t] += step * y[t] * (K[t, i] - K[t, j])
        it += 1
    gmax = -1e300
    gmin = 1e300
    for t in range(n):
        v = -y[t] * grad[t]
        if ((y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0.0)) and v > gmax:
            gmax = v
        if ((y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < C)) and v < gmin:
            gmin = v
    # for free support vectors -y*grad equals the bias exactly
    bias = (gmax + gmin) / 2.0
    return alpha, bias, it, gmax - gmin


def gaussian_kernel(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """K(u, v) = exp(-||u - v||^2 / (2 sigma^2)), rows of A against rows of B."""
    D = squared_distances(A, B)
    return np.exp(-D / (2.0 * sigma * sigma))


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a2 = np.sum(A * A, axis=1)
    b2 = np.sum(B * B, axis=1)
    D = a2[:, None] + b2[None, :] - 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return D


def kernel_from_distances(D: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-D / (2.0 * sigma * sigma))


@dataclass
class SvmModel:
    """A trained binary machine for one ordered class pair.

    ``dual_coefficients`` are alpha_i * y_i for each retained support
    vector; positive coefficients belong to ``class_pair[0]``.
    """

    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    sigma: float
    C: float
    class_pair: tuple = (1, -1)

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=float)
        self.dual_coefficients = np.asarray(self.dual_coefficients, dtype=float)
        if self.support_vectors.ndim != 2:
            raise ParameterError("support vectors must be a 2-D array")
        if self.dual_coefficients.shape[0] != self.support_vectors.shape[0]:
            raise ParameterError("one dual coefficient per support vector required")
        if not np.all(np.isfinite(self.support_vectors)) or not np.all(
            np.isfinite(self.dual_coefficients)
        ):
            raise ParameterError("model contains non-finite values")
        if np.any(np.abs(self.dual_coefficients) > self.C * (1 + 1e-9) + 1e-12):
            raise ParameterError("dual coefficients exceed the box constraint")
        if abs(float(np.sum(self.dual_coefficients))) > 1e-6:
            raise ParameterError("signed dual coefficients do not sum to zero")

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ParameterError(
                f"{X.shape[1]} features given, model expects {self.n_features}"
            )
        K = gaussian_kernel(X, self.support_vectors, self.sigma)
        return K @ self.dual_coefficients + self.bias


def train_svm(
    X: np.ndarray,
    y: np.ndarray,
    sigma: float,
    C: float,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
    class_pair: tuple = (1, -1),
) -> SvmModel:
    """Train one binary machine on +-1 labels.

    Rows are canonicalized internally (lexicographic sort) so the solution
    is independent of input row order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ParameterError("X must be rows x features matching y")
    if sigma <= 0 or C <= 0:
        raise ParameterError("sigma and C must be positive")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ParameterError("both classes must be present")
    if not np.all(np.abs(y) == 1):
        raise ParameterError("labels must be +-1")

    order = np.lexsort(np.vstack([X.T, y]))
    Xs, ys = X[order], y[order]
    K = gaussian_kernel(Xs, Xs, sigma)
    alpha, bias, iterations, gap = _smo_solve(K, ys, float(C), float(tol), int(max_iter))
    if gap >= tol and iterations >= max_iter:
        n_violating = int(np.sum(_kkt_violations(K, alpha, ys, C, tol)))
        raise ConvergenceError(
            f"dual optimization stopped after {iterations} iterations with "
            f"KKT gap {gap:.2e} ({n_violating} violating points)",
            iterations=iterations,
            violations=n_violating,
        )
    sv = np.abs(alpha) > _SV_EPS
    if not np.any(sv):
        sv = np.zeros_like(sv)
        sv[0] = True  # degenerate all-zero solution; keep one row so shapes hold
    return SvmModel(
        support_vectors=Xs[sv],
        dual_coefficients=(alpha * ys)[sv],
        bias=float(bias),
        sigma=float(sigma),
        C=float(C),
        class_pair=tuple(class_pair),
    )


def _kkt_violations(K, alpha, y, C, tol):
    """Points that could still improve the dual objective by more than tol."""
    g = y * (K @ (alpha * y)) - 1.0
    v = -y * g
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    down = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    gmax = np.max(v[up]) if np.any(up) else -np.inf
    gmin = np.min(v[down]) if np.any(down) else np.inf
    return (up & (v > gmin + tol)) | (down & (v < gmax - tol))


def predict(model: SvmModel, x: np.ndarray):
    """Label and decision value for one row; exact zero goes to the first class."""
    value = float(model.decision_values(np.atleast_2d(x))[0])
    label = model.class_pair[0] if value >= 0 else model.class_pair[1]
    return label, value


@dataclass
class MulticlassModel:
    """One-against-one ensemble: one binary machine per unordered class pair."""

    machines: list[SvmModel]
    classes: list

    def __post_init__(self):
        k = len(self.classes)
        if len(set(self.classes)) != k:
            raise ParameterError("classes must be unique")
        expected = k * (k - 1) // 2
        if len(self.machines) != expected:
            raise ParameterError(f"{expected} machines required for {k} classes")
        pairs = {tuple(m.class_pair) for m in self.machines}
        if len(pairs) != expected:
            raise ParameterError("each class pair must appear exactly once")

    @property
    def n_features(self) -> int:
        return self.machines[0].n_features


def train_one_vs_one(X: np.ndarray, y, sigma: float, C: float) -> MulticlassModel:
    """Train one machine per class pair, each on the rows of its two classes."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ParameterError("need at least two classes")
    for c in classes:
        if int(np.sum(y == c)) < 2:
            raise ParameterError(f"class {c!r} has fewer than 2 rows")
    machines = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            a, b = classes[ai], classes[bi]
            mask = (y == a) | (y == b)
            yy = np.where(y[mask] == a, 1.0, -1.0)
            machines.append(
                train_svm(X[mask], yy, sigma=sigma, C=C, class_pair=(a, b))
            )
    return MulticlassModel(machines=machines, classes=classes)


def decision_matrix(model: MulticlassModel, X: np.ndarray) -> np.ndarray:
    """Decision values of every machine for every row (rows x machines)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([m.decision_values(X) for m in model.machines])


def predict_one_vs_one(model: MulticlassModel, x: np.ndarray):
    """Majority vote; ties go to the largest summed |decision|, then class order."""
    return predict_one_vs_one_many(model, np.atleast_2d(x))[0]


def predict_one_vs_one_many(model: MulticlassModel, X: np.ndarray) -> list:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ParameterError(
            f"{X.shape[1]} features given, model expects {model.n_features}"
        )
    values = decision_matrix(model, X)
    class_index = {c: i for i, c in enumerate(model.classes)}
    votes = np.zeros((X.shape[0], len(model.classes)))
    strength = np.zeros_like(votes)
    for mi, machine in enumerate(model.machines):
        a, b = machine.class_pair
        v = values[:, mi]
        winner_a = v >= 0
        votes[winner_a, class_index[a]] += 1
        votes[~winner_a, class_index[b]] += 1
        strength[:, class_index[a]] += np.abs(v)
        strength[:, class_index[b]] += np.abs(v)
    out = []
    for r in range(X.shape[0]):
        best_votes = votes[r].max()
        tied = np.flatnonzero(votes[r] == best_votes)
        if tied.shape[0] > 1:
            best_strength = strength[r, tied].max()
            tied = tied[strength[r, tied] == best_strength]
        out.append(model.classes[int(tied[0])])
    return out


@dataclass
class EvalResult:
    """Cross-validated classification outcome."""

    ccr: float
    per_fold: list[float]
    confusion: np.ndarray
    classes: list = field(default_factory=list)

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=int)
        if not 0.0 <= self.ccr <= 100.0:
            raise ParameterError("CCR must be a percentage")
        total = int(self.confusion.sum())
        if total > 0:
            pooled = 100.0 * float(np.trace(self.confusion)) / total
            if abs(pooled - self.ccr) > 1e-9:
                raise ParameterError("CCR does not match the confusion matrix")


def stratified_folds(y, k_folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; returns test-index arrays."""
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k_folds)]
    for c in classes:
        idx = np.flatnonzero(y == c)
        if idx.shape[0] < k_folds:
            raise ParameterError(
                f"class {c!r} has {idx.shape[0]} rows; need at least {k_folds} to stratify"
            )
        idx = idx[rng.permutation(idx.shape[0])]
        for pos, row in enumerate(idx):
            folds[pos % k_folds].append(int(row))
    return [np.asarray(sorted(f), dtype=int) for f in folds]


def standardize_columns(train: np.ndarray, *others):
    """Z-score columns by training statistics; zero-variance columns pass through."""
    mean = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    scaled = [(train - mean) / sd] + [(o - mean) / sd for o in others]
    return mean, sd, scaled


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("FAMFEAT_THREADS", "1")))
    except ValueError:
        return 1


def cross_validated_ccr(
    X: np.ndarray,
    y,
    sigma: float,
    C: float,
    k_folds: int = 5,
    seed: int = 0,
    standardize: bool = True,
) -> EvalResult:
    """Stratified k-fold cross-validated correct classification rate.

    Folds are fixed by ``seed``. Columns are z-scored with training-fold
    statistics before kernel evaluation. The headline CCR is pooled over
    all held-out predictions (identical to the fold mean for equal folds).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if k_folds < 2:
        raise ParameterError("need at least 2 folds")
    classes = sorted(set(y.tolist()))
    class_index = {c: i for i, c in enumerate(classes)}
    folds = stratified_folds(y, k_folds, seed)

    def run_fold(test_idx):
        train_mask = np.ones(X.shape[0], dtype=bool)
        train_mask[test_idx] = False
        X_tr, y_tr = X[train_mask], y[train_mask]
        X_te, y_te = X[test_idx], y[test_idx]
        if standardize:
            _, _, (X_tr, X_te) = standardize_columns(X_tr, X_te)
        if len(classes) == 2:
            machine = train_svm(
                X_tr,
                np.where(y_tr == classes[0], 1.0, -1.0),
                sigma=sigma,
                C=C,
                class_pair=(classes[0], classes[1]),
            )
            values = machine.decision_values(X_te)
            pred = [classes[0] if v >= 0 else classes[1] for v in values]
        else:
            machine = train_one_vs_one(X_tr, y_tr, sigma=sigma, C=C)
            pred = predict_one_vs_one_many(machine, X_te)
        return y_te, pred

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_fold, folds))
    else:
        results = [run_fold(f) for f in folds]

    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    per_fold = []
    for y_te, pred in results:
        correct = 0
        for truth, guess in zip(y_te, pred):
            confusion[class_index[truth], class_index[guess]] += 1
            correct += int(truth == guess)
        per_fold.append(100.0 * correct / len(y_te))
    ccr = 100.0 * float(np.trace(confusion)) / int(confusion.sum())
    return EvalResult(ccr=ccr, per_fold=per_fold, confusion=confusion, classes=classes)


def default_sigma_grid(lo: float = 0.1, hi: float = 10.0) -> list[float]:
    """Doubling grid from ``lo`` up to ``hi``."""
    grid = []
    v = lo
    while v <= hi * (1 + 1e-12):
        grid.append(v)
        v *= 2.0
    return grid


def sigma_search(
    X: np.ndarray,
    y,
    C: float,
    coarse_grid=None,
    refine_steps: int = 3,
    k_folds: int = 5,
    seed: int = 0,
):
    """Coarse-to-fine search of the kernel width by cross-validated CCR.

    Scans the coarse grid, then repeatedly halves the step (in log space)
    around the running best. Ties prefer the smaller sigma. Returns the
    best sigma and the table of every (sigma, ccr) evaluated, in order.
    """
    grid = list(coarse_grid) if coarse_grid is not None else default_sigma_grid()
    if not grid or any(s <= 0 for s in grid):
        raise ParameterError("sigma grid must be nonempty and positive")

    table: list[tuple[float, float]] = []
    scored: dict[float, float] = {}

    def score(sig: float) -> float:
        sig = float(sig)
        if sig not in scored:
            try:
                ccr = cross_validated_ccr(X, y, sig, C, k_folds=k_folds, seed=seed).ccr
            except ConvergenceError as err:
                log.warning("sigma=%.4g failed to train: %s", sig, err)
                ccr = 0.0
            scored[sig] = ccr
            table.append((sig, ccr))
        return scored[sig]

    best = None
    for sig in sorted(grid):
        ccr = score(sig)
        if best is None or ccr > scored[best] or (ccr == scored[best] and sig < best):
            best = sig
    factor = 2.0
    for _ in range(refine_steps):
        factor = np.sqrt(factor)
        for cand in sorted((best / factor, best * factor)):
            ccr = score(cand)
            if ccr > scored[best] or (ccr == scored[best] and cand < best):
                best = cand
    return float(best), table
