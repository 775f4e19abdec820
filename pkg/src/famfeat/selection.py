"""Three-stage feature-selection cascade.

Stage 1 keeps the columns with the smallest two-sample t-test p-values,
stage 2 runs orthogonal forward selection scored by the Fisher discriminant
ratio of Gram-Schmidt residuals, and stage 3 is a classifier-in-the-loop
floating search (add r, take away l) evaluated by cross-validated SVM CCR.
All stages are deterministic given data, configuration and seed.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .classify import (
    kernel_from_distances,
    standardize_columns,
    stratified_folds,
    _smo_solve,
)
from .errors import ConvergenceError, ParameterError

log = logging.getLogger(__name__)

# residual norms below this are treated as linearly dependent columns
DEPENDENT_TOL = 1e-10


@dataclass
class FeatureMatrix:
    """Epochs x features values with per-row class labels and column names."""

    values: np.ndarray
    labels: list
    names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ParameterError("values must be rows x columns")
        if len(self.labels) != self.values.shape[0]:
            raise ParameterError("one label per row required")
        if len(self.names) != self.values.shape[1]:
            raise ParameterError("one name per column required")
        if len(set(self.names)) != len(self.names):
            raise ParameterError("column names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("feature matrix contains non-finite entries")
        counts: dict = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        shallow = [lab for lab, c in counts.items() if c < 2]
        if shallow:
            raise ParameterError(f"classes with fewer than 2 rows: {shallow}")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def classes(self) -> list:
        return sorted(set(self.labels))

    def class_mask(self, label) -> np.ndarray:
        return np.asarray([lab == label for lab in self.labels], dtype=bool)


@dataclass
class SelectionReport:
    """Survivors and scores of each cascade stage; stages are nested."""

    stage1_ids: list[int]
    stage1_pvalues: list[float]
    stage2_ids: list[int]
    stage2_scores: list[float]
    stage3_ids: list[int]
    stage3_trace: list[float]
    stage3_best_ccr: float = 0.0
    class_pair: tuple = ()
    names: list[str] = field(default_factory=list)
    shortfall: bool = False
    degenerate_columns: list[int] = field(default_factory=list)

    def __post_init__(self):
        s1, s2, s3 = set(self.stage1_ids), set(self.stage2_ids), set(self.stage3_ids)
        if not (s3 <= s2 <= s1):
            raise ParameterError("cascade stages must be nested")
        if len(self.stage1_pvalues) != len(self.stage1_ids):
            raise ParameterError("one p-value per stage-1 survivor required")
        if len(self.stage2_scores) != len(self.stage2_ids):
            raise ParameterError("one score per stage-2 survivor required")


def t_test_pvalues(
    fm: FeatureMatrix, class_a, class_b, equal_var: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided two-sample t-test p-value per column.

    Unequal-variance (Welch) by default with Welch-Satterthwaite degrees of
    freedom; ``equal_var=True`` pools. Columns with zero variance in both
    classes get p = 1 and are flagged in the returned degeneracy mask.
    """
    a = fm.values[fm.class_mask(class_a)]
    b = fm.values[fm.class_mask(class_b)]
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ParameterError("both classes need at least 2 rows")
    na, nb = a.shape[0], b.shape[0]
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    va, vb = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
    degenerate = (va == 0) & (vb == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if equal_var:
            sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
            se2 = sp2 * (1.0 / na + 1.0 / nb)
            df = np.full(va.shape, float(na + nb - 2))
        else:
            se2 = va / na + vb / nb
            df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        t = (ma - mb) / np.sqrt(se2)
        p = 2.0 * _stats.t.sf(np.abs(t), df)
    p = np.where(degenerate, 1.0, p)
    # zero variance in one class only still yields a valid statistic; where
    # the difference is exact the p-value underflows, clamp into (0, 1]
    p = np.where(np.isnan(p), 1.0, p)
    p = np.clip(p, np.nextafter(0.0, 1.0), 1.0)
    return p, degenerate


def pvalue_filter(pvals: np.ndarray, alpha: float = 0.01, cap: int = 500) -> list[int]:
    """Columns significant at ``alpha``, then the ``cap`` smallest by p-value.

    Ties at the cap boundary resolve to the lower column index.
    """
    if cap < 1:
        raise ParameterError("cap must be at least 1")
    pvals = np.asarray(pvals, dtype=float)
    ids = np.flatnonzero(pvals < alpha)
    order = np.lexsort((ids, pvals[ids]))
    return [int(i) for i in ids[order][:cap]]


def fisher_discriminant_ratio(
    col: np.ndarray, labels, denominator: str = "squared"
) -> float:
    """Two-class separation score (m1 - m2)^2 over the class-variance term.

    ``denominator='squared'`` divides by (s1^2 + s2^2)^2, ``'linear'`` by
    (s1^2 + s2^2). A zero denominator gives inf for separated means and 0
    for equal ones.
    """
    col = np.asarray(col, dtype=float).ravel()
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) != 2:
        raise ParameterError(f"exactly two classes required, got {classes}")
    a = col[labels == classes[0]]
    b = col[labels == classes[1]]
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ParameterError("both classes need at least 2 rows")
    num = (a.mean() - b.mean()) ** 2
    den = a.var() + b.var()
    if den == 0.0:
        return float("inf") if num > 0 else 0.0
    if denominator == "squared":
        return float(num / den**2)
    if denominator == "linear":
        return float(num / den)
    raise ParameterError(f"unknown denominator mode {denominator!r}")


def _bulk_fdr(R: np.ndarray, mask_a: np.ndarray, mask_b: np.ndarray, denominator: str) -> np.ndarray:
    ma = R[mask_a].mean(axis=0)
    mb = R[mask_b].mean(axis=0)
    va = R[mask_a].var(axis=0)
    vb = R[mask_b].var(axis=0)
    num = (ma - mb) ** 2
    den = va + vb
    if denominator == "squared":
        den = den**2
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = num / den
    scores[(num == 0) & (den == 0)] = 0.0
    scores[(num > 0) & (den == 0)] = np.inf
    return scores


@dataclass
class OrthoSelectResult:
    ids: list[int]
    scores: list[float]
    shortfall: bool


def gram_schmidt_fdr_select(
    fm: FeatureMatrix, k: int, denominator: str = "squared"
) -> OrthoSelectResult:
    """Orthogonal forward selection scored by the discriminant ratio.

    Columns are normalized to unit length on entry (the scoring is then
    invariant to positive rescaling of any input column). Each step scores
    the Gram-Schmidt residuals of all unselected columns against the span
    of the selected ones and takes the best; residuals with norm below
    ``DEPENDENT_TOL`` are dropped as linearly dependent. Ties resolve to
    the lower column index.
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    if k > fm.n_columns:
        raise ParameterError(f"k={k} exceeds {fm.n_columns} columns")
    classes = fm.classes()
    if len(classes) != 2:
        raise ParameterError(f"exactly two classes required, got {classes}")
    mask_a = fm.class_mask(classes[0])
    mask_b = fm.class_mask(classes[1])

    norms = np.linalg.norm(fm.values, axis=0)
    alive = norms > 0
    R = np.zeros_like(fm.values)
    R[:, alive] = fm.values[:, alive] / norms[alive]

    ids: list[int] = []
    scores: list[float] = []
    residual_norms = np.where(alive, 1.0, 0.0)
    for _ in range(k):
        eligible = alive & (residual_norms >= DEPENDENT_TOL)
        if not np.any(eligible):
            break
        step_scores = _bulk_fdr(R, mask_a, mask_b, denominator)
        step_scores[~eligible] = -np.inf
        pick = int(np.argmax(step_scores))  # first max wins: lowest index on ties
        ids.append(pick)
        scores.append(float(step_scores[pick]))
        q = R[:, pick] / residual_norms[pick]
        R -= np.outer(q, q @ R)
        alive[pick] = False
        residual_norms = np.linalg.norm(R, axis=0)
    return OrthoSelectResult(ids=ids, scores=scores, shortfall=len(ids) < k)


class CvSubsetEvaluator:
    """Cross-validated SVM CCR of a column subset, tuned for repeated calls.

    Folds, per-fold standardization and per-feature squared-distance
    contributions are fixed up front; candidate subsets then only pay for a
    rank-one distance update (warm-started from a recently scored
    neighbouring subset) plus the kernel solves. Scores match
    :func:`famfeat.classify.cross_validated_ccr` on the same folds exactly.
    """

    def __init__(
        self,
        fm: FeatureMatrix,
        sigma: float = 1.0,
        C: float = 1.0,
        k_folds: int = 5,
        seed: int = 0,
        tol: float = 1e-3,
        max_iter: int = 200_000,
    ):
        if sigma <= 0 or C <= 0:
            raise ParameterError("sigma and C must be positive")
        self.sigma = float(sigma)
        self.C = float(C)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.labels = np.asarray(fm.labels)
        self.classes = fm.classes()
        if len(self.classes) != 2:
            raise ParameterError("the wrapper evaluator is a two-class protocol")
        self.folds = stratified_folds(self.labels, k_folds, seed)
        self.n = fm.n_rows
        self._fold_data = []
        for test_idx in self.folds:
            train_mask = np.ones(self.n, dtype=bool)
            train_mask[test_idx] = False
            train_idx = np.flatnonzero(train_mask)
            _, _, (Z_tr, Z_te) = standardize_columns(
                fm.values[train_idx], fm.values[test_idx]
            )
            Z = np.zeros((self.n, fm.n_columns))
            Z[train_idx] = Z_tr
            Z[test_idx] = Z_te
            y_tr = np.where(self.labels[train_idx] == self.classes[0], 1.0, -1.0)
            y_te = np.where(self.labels[test_idx] == self.classes[0], 1.0, -1.0)
            # canonical row order, so scores are independent of row layout
            order = np.lexsort(np.vstack([Z_tr.T, y_tr]))
            self._fold_data.append(
                {"Z": Z, "train_ordered": train_idx[order], "test": test_idx,
                 "y_tr": y_tr[order], "y_te": y_te}
            )
        self._score_cache: dict[frozenset, float] = {}
        self._dist_cache: OrderedDict[frozenset, list[np.ndarray]] = OrderedDict()
        self.evaluations = 0

    def _feature_distance(self, fold, j: int) -> np.ndarray:
        col = fold["Z"][:, j]
        d = col[:, None] - col[None, :]
        return d * d

    def _distances(self, key: frozenset) -> list[np.ndarray]:
        if key in self._dist_cache:
            self._dist_cache.move_to_end(key)  # keep scan bases resident
            return self._dist_cache[key]
        # patching the nearest cached subset beats a full rebuild as long as
        # fewer features change than the subset holds
        base = None
        best_diff = None
        for cached_key in reversed(self._dist_cache):
            d = len(cached_key ^ key)
            if best_diff is None or d < best_diff:
                base, best_diff = cached_key, d
                if d == 1:
                    break
        if base is not None and best_diff < len(key):
            self._dist_cache.move_to_end(base)
            mats = [D.copy() for D in self._dist_cache[base]]
            for f, fold in enumerate(self._fold_data):
                for j in key - base:
                    mats[f] += self._feature_distance(fold, j)
                for j in base - key:
                    mats[f] -= self._feature_distance(fold, j)
        else:
            mats = []
            for fold in self._fold_data:
                D = np.zeros((self.n, self.n))
                for j in key:
                    D += self._feature_distance(fold, j)
                mats.append(D)
        while len(self._dist_cache) >= 16:
            self._dist_cache.popitem(last=False)
        self._dist_cache[key] = mats
        return mats

    def __call__(self, ids) -> float:
        """Pooled CV-CCR (percent) of the subset; failures score 0."""
        key = frozenset(int(i) for i in ids)
        if not key:
            raise ParameterError("cannot evaluate an empty subset")
        if key in self._score_cache:
            return self._score_cache[key]
        self.evaluations += 1
        try:
            score = self._evaluate(key)
        except ConvergenceError as err:
            log.warning("evaluator failed on %s: %s", sorted(key), err)
            score = 0.0
        self._score_cache[key] = score
        return score

    def _evaluate(self, key: frozenset) -> float:
        mats = self._distances(key)
        correct = 0
        total = 0
        for D, fold in zip(mats, self._fold_data):
            tr, te = fold["train_ordered"], fold["test"]
            K_tr = kernel_from_distances(D[np.ix_(tr, tr)], self.sigma)
            alpha, bias, iterations, gap = _smo_solve(
                K_tr, fold["y_tr"], self.C, self.tol, self.max_iter
            )
            if gap >= self.tol and iterations >= self.max_iter:
                raise ConvergenceError(
                    f"SMO stalled after {iterations} iterations", iterations=iterations
                )
            K_te = kernel_from_distances(D[np.ix_(te, tr)], self.sigma)
            values = K_te @ (alpha * fold["y_tr"]) + bias
            pred = np.where(values >= 0, 1.0, -1.0)
            correct += int(np.sum(pred == fold["y_te"]))
            total += fold["y_te"].shape[0]
        return 100.0 * correct / total


@dataclass
class WrapperResult:
    ids: list[int]
    trace: list[float]
    best_ccr: float


def _greedy_add(working: list[int], pool, evaluator, trace, visited, target: int):
    candidates = [c for c in pool if c not in working]
    if not candidates:
        return
    scores = [evaluator(tuple(working) + (c,)) for c in candidates]
    # ties resolve to the lowest column index
    best = max(range(len(candidates)), key=lambda i: (scores[i], -candidates[i]))
    working.append(candidates[best])
    trace.append(scores[best])
    if len(working) == target:
        visited.append((tuple(sorted(working)), scores[best]))


def _greedy_remove(working: list[int], evaluator, trace, visited, target: int):
    if len(working) <= 1:
        return
    scores = [evaluator(tuple(x for x in working if x != c)) for c in working]
    best = max(range(len(working)), key=lambda i: (scores[i], -working[i]))
    working.pop(best)
    trace.append(scores[best])
    if len(working) == target:
        visited.append((tuple(sorted(working)), scores[best]))


def plus_r_take_away_l(
    fm: FeatureMatrix,
    start_ids,
    target: int,
    evaluator,
    r: int = 2,
    l: int = 1,
) -> WrapperResult:
    """Floating wrapper search over ``start_ids`` for the best ``target``-subset.

    Runs greedy forward and greedy backward passes first (so the reported
    best provably dominates plain forward selection and survives deceptive
    single-column landscapes), then the floating cycles proper: add the r
    best columns one at a time, remove the l least useful, growing through
    ``target``. Every subset of size exactly ``target`` seen along the way
    competes on evaluator CCR; the first-seen best wins. Deterministic for
    a fixed evaluator (which fixes folds and seed).
    """
    pool = [int(i) for i in start_ids]
    if len(set(pool)) != len(pool):
        raise ParameterError("start_ids contains duplicates")
    if not 1 <= target <= len(pool):
        raise ParameterError(f"target={target} out of range for pool of {len(pool)}")
    if not (r > l >= 1):
        raise ParameterError("need r > l >= 1")

    if target == len(pool):
        score = evaluator(tuple(pool))
        return WrapperResult(ids=sorted(pool), trace=[score], best_ccr=score)

    visited: list[tuple[tuple, float]] = []
    trace: list[float] = []

    # forward pass: plain greedy growth to target
    working: list[int] = []
    while len(working) < target:
        _greedy_add(working, pool, evaluator, trace, visited, target)

    # backward pass: greedy elimination from the full pool down to target
    working = list(pool)
    trace.append(evaluator(tuple(working)))
    while len(working) > target:
        _greedy_remove(working, evaluator, trace, visited, target)

    # floating cycles: net growth of r - l per cycle, passing through target
    working = []
    cycles = int(np.ceil(target / (r - l)))
    for _ in range(cycles):
        for _ in range(r):
            if len(working) < len(pool):
                _greedy_add(working, pool, evaluator, trace, visited, target)
        for _ in range(l):
            _greedy_remove(working, evaluator, trace, visited, target)

    best_ids, best_ccr = visited[0]
    for ids, ccr in visited[1:]:
        if ccr > best_ccr:
            best_ids, best_ccr = ids, ccr
    return WrapperResult(ids=sorted(best_ids), trace=trace, best_ccr=best_ccr)


def make_cv_svm_evaluator(
    fm: FeatureMatrix,
    sigma: float = 1.0,
    C: float = 1.0,
    k_folds: int = 5,
    seed: int = 0,
) -> CvSubsetEvaluator:
    """The stage-3 evaluator: stratified k-fold cross-validated SVM CCR."""
    return CvSubsetEvaluator(fm, sigma=sigma, C=C, k_folds=k_folds, seed=seed)


def run_cascade(
    fm: FeatureMatrix,
    class_a,
    class_b,
    alpha: float = 0.01,
    stage_sizes: tuple[int, int, int] = (500, 100, 20),
    t_test: str = "welch",
    fdr_denominator: str = "squared",
    r: int = 2,
    l: int = 1,
    wrapper_sigma: float = 1.0,
    wrapper_C: float = 1.0,
    wrapper_folds: int = 5,
    seed: int = 0,
) -> SelectionReport:
    """Run the full three-stage cascade for one class pair."""
    cap1, cap2, cap3 = stage_sizes
    if not cap1 > cap2 > cap3 >= 1:
        raise ParameterError("stage sizes must be strictly decreasing")
    pvals, degenerate = t_test_pvalues(
        fm, class_a, class_b, equal_var=(t_test == "pooled")
    )
    stage1 = pvalue_filter(pvals, alpha=alpha, cap=cap1)
    if not stage1:
        return SelectionReport(
            stage1_ids=[], stage1_pvalues=[], stage2_ids=[], stage2_scores=[],
            stage3_ids=[], stage3_trace=[], class_pair=(class_a, class_b),
            names=list(fm.names), shortfall=True,
            degenerate_columns=[int(i) for i in np.flatnonzero(degenerate)],
        )

    keep_mask = (fm.class_mask(class_a)) | (fm.class_mask(class_b))
    sub = FeatureMatrix(
        values=fm.values[np.ix_(keep_mask, np.asarray(stage1))],
        labels=[lab for lab, m in zip(fm.labels, keep_mask) if m],
        names=[fm.names[i] for i in stage1],
    )
    k2 = min(cap2, len(stage1))
    ortho = gram_schmidt_fdr_select(sub, k2, denominator=fdr_denominator)
    stage2 = [stage1[i] for i in ortho.ids]

    sub3 = FeatureMatrix(
        values=sub.values[:, ortho.ids],
        labels=sub.labels,
        names=[sub.names[i] for i in ortho.ids],
    )
    target = min(cap3, len(stage2))
    evaluator = make_cv_svm_evaluator(
        sub3, sigma=wrapper_sigma, C=wrapper_C, k_folds=wrapper_folds, seed=seed
    )
    wrapped = plus_r_take_away_l(
        sub3, list(range(len(stage2))), target, evaluator, r=r, l=l
    )
    stage3 = sorted(stage2[i] for i in wrapped.ids)

    return SelectionReport(
        stage1_ids=stage1,
        stage1_pvalues=[float(pvals[i]) for i in stage1],
        stage2_ids=stage2,
        stage2_scores=ortho.scores,
        stage3_ids=stage3,
        stage3_trace=wrapped.trace,
        stage3_best_ccr=wrapped.best_ccr,
        class_pair=(class_a, class_b),
        names=list(fm.names),
        shortfall=ortho.shortfall or len(stage3) < cap3,
        degenerate_columns=[int(i) for i in np.flatnonzero(degenerate)],
    )
