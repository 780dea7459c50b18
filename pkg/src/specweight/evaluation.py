"""Metrics, cross-validation, sub-cohort analysis, and rank tests.

Every test sample is scored exactly once across the stratified folds, so
median-split and per-factor sub-cohort analyses pool the per-fold test
predictions and inferred weights. The decision threshold is 0.5 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import training as tr
from .dataset import CohortDataset
from .factor_graph import FactorTable, SpectralBasis, basis_from_factors
from .seeding import derive_seed

DEFAULT_K_GRID = (10, 30, 50, 75, 100)
DEFAULT_C_GRID = (0.5, 0.65, 0.7, 0.75, 1.0)


# ---------------------------------------------------------------------------
# metrics

def _as_binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    return arr


def balanced_accuracy(labels, predictions) -> float:
    """Mean of sensitivity and specificity at threshold 0.5.

    `predictions` may be probabilities or already-binary values; anything
    >= 0.5 counts as a positive call. Requires both classes among the labels.
    """
    y = _as_binary(labels, "labels").astype(int)
    pred = _as_binary(predictions, "predictions") >= 0.5
    pos = y == 1
    neg = ~pos
    if not pos.any() or not neg.any():
        raise ValueError("balanced accuracy needs both classes among the labels")
    sens = np.mean(pred[pos])
    spec = np.mean(~pred[neg])
    return float((sens + spec) / 2.0)


def f1_score(labels, predictions) -> float:
    """Harmonic mean of precision and recall for the positive class; 0 when
    there are neither true positives nor any positive calls to speak of."""
    y = _as_binary(labels, "labels").astype(int)
    pred = (_as_binary(predictions, "predictions") >= 0.5).astype(int)
    tp = int(np.sum((y == 1) & (pred == 1)))
    fp = int(np.sum((y == 0) & (pred == 1)))
    fn = int(np.sum((y == 1) & (pred == 0)))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per sample with per-class proportions balanced within one.

    Samples are subjects, so the assignment is subject-level by construction.
    Each class is shuffled under the seed and dealt round-robin, continuing
    the rotation across classes so overall fold sizes also differ by at most
    one. Deterministic for a given (labels, k, seed).
    """
    y = _as_binary(labels, "labels").astype(int)
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = np.bincount(y, minlength=2)
    if counts.min() < k:
        raise ValueError(f"smallest class has {counts.min()} samples, fewer than {k} folds")
    rng = np.random.default_rng(seed)
    folds = np.full(y.shape[0], -1, dtype=int)
    offset = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = rng.permutation(members)
        folds[members] = (np.arange(members.size) + offset) % k
        offset = (offset + members.size) % k
    return folds


def mann_whitney_u(group_a, group_b) -> tuple[float, float]:
    """Rank-sum U statistic and a two-sided p-value.

    U is the smaller of the two one-sided statistics, computed from midranks.
    The p-value uses the normal approximation with tie and continuity
    corrections; when every value is identical the statistic carries no
    information and p is 1.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("rank test requires finite values")
    na, nb = a.size, b.size
    pooled = np.concatenate([a, b])
    n = na + nb

    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(n)
    sorted_vals = pooled[order]
    i = 0
    tie_term = 0.0
    while i < n:
        j = i + 1
        while j < n and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # midrank of positions i..j-1 (1-based)
        t = j - i
        tie_term += t ** 3 - t
        i = j
    u_a = float(np.sum(ranks[:na]) - na * (na + 1) / 2.0)
    u_b = na * nb - u_a
    u = min(u_a, u_b)

    variance = (na * nb / 12.0) * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if variance <= 0.0:
        return u, 1.0
    z = (u - na * nb / 2.0 + 0.5) / math.sqrt(variance)
    p = 2.0 * (0.5 * math.erfc(-z / math.sqrt(2.0)))  # 2 * Phi(z), z <= 0 up to the correction
    return u, min(1.0, p)


# ---------------------------------------------------------------------------
# cross-validation

@dataclass
class FoldResult:
    fold: int
    test_mask: np.ndarray     # (n_samples,) bool
    y: np.ndarray             # (n_samples,)
    prob: np.ndarray          # (n_samples,)
    weights: np.ndarray       # (n_samples,), NaN where the scheme defines none
    bacc: float = float("nan")
    f1: float = float("nan")


@dataclass
class CVRun:
    scheme: str
    seed: int
    n_folds: int
    fold_results: list[FoldResult] = field(default_factory=list)
    manifests: list[dict] = field(default_factory=list)
    models: list = field(default_factory=list)
    basis: SpectralBasis | None = None
    basis_info: dict | None = None

    @property
    def fold_bacc(self) -> np.ndarray:
        return np.array([f.bacc for f in self.fold_results])

    @property
    def fold_f1(self) -> np.ndarray:
        return np.array([f.f1 for f in self.fold_results])

    def pooled_test(self):
        """(row_index, fold, y, prob, weight) for every sample's test fold."""
        rows, folds, ys, probs, ws = [], [], [], [], []
        for fr in self.fold_results:
            idx = np.flatnonzero(fr.test_mask)
            rows.append(idx)
            folds.append(np.full(idx.size, fr.fold))
            ys.append(fr.y[idx])
            probs.append(fr.prob[idx])
            ws.append(fr.weights[idx])
        return (np.concatenate(rows), np.concatenate(folds), np.concatenate(ys),
                np.concatenate(probs), np.concatenate(ws))


def format_mean_std(values) -> str:
    """Percent-scale "mean +/- std" string for fold-level metric summaries."""
    arr = np.asarray(values, dtype=np.float64)
    return f"{100.0 * arr.mean():.1f} ± {100.0 * arr.std():.1f}"


def cross_validate(data: CohortDataset, factors: FactorTable | None, cfg: tr.TrainConfig,
                   n_folds: int = 5, model_factory=tr.default_model_factory,
                   basis: SpectralBasis | None = None, basis_info: dict | None = None) -> CVRun:
    """Train and score one scheme across stratified folds.

    The factor graph and its basis cover all samples and are built once; only
    the train/test partition changes per fold. Each fold trains under its own
    derived seed.
    """
    labels = data.labels
    needs_graph = cfg.scheme in ("spectral", "only_graph")
    if needs_graph and basis is None:
        if factors is None:
            raise ValueError(f"scheme {cfg.scheme} requires a factor table")
        basis, basis_info = basis_from_factors(factors, cfg.k_neighbors, cfg.m_basis)

    folds = stratified_kfold(labels, n_folds, derive_seed(cfg.seed, "folds"))
    run = CVRun(cfg.scheme, cfg.seed, n_folds, basis=basis, basis_info=basis_info)

    for fold in range(n_folds):
        test_mask = folds == fold
        train_rows = np.flatnonzero(~test_mask)
        test_rows = np.flatnonzero(test_mask)
        fold_cfg = replace(cfg, seed=derive_seed(cfg.seed, "fold", fold))
        split = (train_rows, test_rows)

        if cfg.scheme == "spectral":
            result = tr.train_spectral(data, basis, fold_cfg, split, model_factory)
        elif cfg.scheme == "only_graph":
            result = tr.train_only_graph(data, basis, fold_cfg, split, model_factory)
        elif cfg.scheme == "jtt":
            result = tr.train_jtt(data, fold_cfg, split, model_factory)
        else:
            result = tr.train_baseline_none(data, fold_cfg, split, model_factory)

        prob = np.array([result.model.forward(s.visits)[0] for s in data.subjects])
        if result.weight_field is not None:
            weights = result.weight_field.weights()
        elif cfg.scheme == "jtt":
            weights = np.full(data.n_samples, np.nan)
            weights[train_rows] = result.jtt_weights
        else:
            weights = np.ones(data.n_samples)

        fr = FoldResult(fold, test_mask, labels.copy(), prob, weights)
        fr.bacc = balanced_accuracy(labels[test_mask], prob[test_mask])
        fr.f1 = f1_score(labels[test_mask], prob[test_mask])
        run.fold_results.append(fr)
        run.models.append(result.model)
        run.manifests.append({
            "fold": fold,
            "scheme": cfg.scheme,
            "seed": fold_cfg.seed,
            "config": {k: (v if not isinstance(v, (np.integer, np.floating)) else v.item())
                       for k, v in vars(cfg).items()},
            "initial_objective": result.history.initial_objective,
            "final_objective": result.history.final_objective,
            "epoch_losses": result.history.epoch_losses,
        })
    return run


# ---------------------------------------------------------------------------
# sub-cohort analysis

@dataclass
class MedianSplitGap:
    bacc_high: float
    bacc_low: float
    gap_points: float     # 100 * (high - low), signed
    gap_percent: float    # 100 * |high - low| / low
    n_high: int
    n_low: int
    degenerate: bool


def median_split_from_arrays(y, prob, weights) -> MedianSplitGap:
    """Balanced-accuracy gap between high- and low-weight cohorts.

    Splits at the median weight; samples at the median go to the low side.
    All-equal or missing weights leave one side empty: the gap is reported
    as 0 and flagged degenerate.
    """
    y = np.asarray(y)
    prob = np.asarray(prob)
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(~np.isfinite(w)):
        return MedianSplitGap(float("nan"), float("nan"), 0.0, 0.0, 0, 0, True)
    median = float(np.median(w))
    high = w > median
    low = ~high
    if not high.any() or not low.any():
        return MedianSplitGap(float("nan"), float("nan"), 0.0, 0.0,
                              int(high.sum()), int(low.sum()), True)
    bacc_high = balanced_accuracy(y[high], prob[high])
    bacc_low = balanced_accuracy(y[low], prob[low])
    gap_points = 100.0 * (bacc_high - bacc_low)
    gap_percent = 100.0 * abs(bacc_high - bacc_low) / max(bacc_low, 1e-12)
    return MedianSplitGap(bacc_high, bacc_low, gap_points, gap_percent,
                          int(high.sum()), int(low.sum()), False)


def median_split_gap(run: CVRun) -> MedianSplitGap:
    """Median-split gap over the test samples pooled across folds."""
    _, _, y, prob, w = run.pooled_test()
    return median_split_from_arrays(y, prob, w)


@dataclass
class GroupStats:
    label: str
    n: int
    mean_weight: float
    bacc: float | None


@dataclass
class PairTest:
    group_a: str
    group_b: str
    u_statistic: float
    p_value: float


@dataclass
class SubcohortReport:
    factor: str
    groups: list[GroupStats]
    pairwise: list[PairTest]


def _tertile_bins(values: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Equal-count tertiles; samples sharing a value all take the lower bin."""
    n = values.size
    order = np.argsort(values, kind="stable")
    bins = np.empty(n, dtype=int)
    bins[order] = (3 * np.arange(n)) // n
    for v in np.unique(values):
        members = values == v
        bins[members] = bins[members].min()
    return bins, ["low", "mid", "high"]


def factor_subcohort_table(weights, y, prob, factor_values, factor_name: str) -> SubcohortReport:
    """Group test samples by one factor and compare weights and accuracy.

    Factors with at most two distinct values form one group per value;
    anything else is split into tertiles. Group balanced accuracy is None
    when a group holds only one class. Pairwise weight comparisons use the
    rank-sum test.
    """
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(y)
    prob = np.asarray(prob)
    values = np.asarray(factor_values, dtype=np.float64)
    have_weights = bool(np.all(np.isfinite(w)))

    distinct = np.unique(values)
    if distinct.size <= 2:
        bins = np.searchsorted(distinct, values)
        names = [f"{v:g}" for v in distinct]
    else:
        bins, names = _tertile_bins(values)

    groups = []
    present = []
    for g, name in enumerate(names):
        members = bins == g
        if not members.any():
            continue
        labels = y[members]
        bacc = None
        if np.unique(labels).size == 2:
            bacc = balanced_accuracy(labels, prob[members])
        mean_w = float(w[members].mean()) if have_weights else float("nan")
        groups.append(GroupStats(name, int(members.sum()), mean_w, bacc))
        present.append((name, members))

    # Weight comparisons only make sense for schemes that define test weights.
    pairwise = []
    if have_weights:
        for i in range(len(present)):
            for j in range(i + 1, len(present)):
                u, p = mann_whitney_u(w[present[i][1]], w[present[j][1]])
                pairwise.append(PairTest(present[i][0], present[j][0], u, p))
    return SubcohortReport(factor_name, groups, pairwise)


def subcohort_tables(run: CVRun, factors: FactorTable) -> list[SubcohortReport]:
    rows, _, y, prob, w = run.pooled_test()
    return [
        factor_subcohort_table(w, y, prob, factors.values[rows, k], name)
        for k, name in enumerate(factors.factor_names)
    ]


# ---------------------------------------------------------------------------
# neighbor / centering sweep

@dataclass
class SweepCell:
    k: int
    c: float
    seed: int
    gap_points: float
    gap_percent: float
    bacc_high: float
    bacc_low: float
    overall_bacc: float
    degenerate: bool


def sweep(data: CohortDataset, factors: FactorTable, cfg: tr.TrainConfig,
          k_values=DEFAULT_K_GRID, c_values=DEFAULT_C_GRID,
          n_folds: int = 5, model_factory=tr.default_model_factory) -> list[SweepCell]:
    """Full-factorial neighbor-count x centering grid of median-split gaps.

    Cells run the spectral scheme independently, each under seed + cell index
    (row-major over the grid); the basis is shared across centering values for
    a given neighbor count since it does not depend on c.
    """
    cells = []
    for ik, k in enumerate(k_values):
        basis, info = basis_from_factors(factors, k, cfg.m_basis)
        for ic, c in enumerate(c_values):
            cell_seed = cfg.seed + ik * len(c_values) + ic
            cell_cfg = replace(cfg, scheme="spectral", k_neighbors=k,
                               centering_c=c, seed=cell_seed)
            run = cross_validate(data, factors, cell_cfg, n_folds, model_factory,
                                 basis=basis, basis_info=info)
            gap = median_split_gap(run)
            cells.append(SweepCell(k, float(c), cell_seed, gap.gap_points,
                                   gap.gap_percent, gap.bacc_high, gap.bacc_low,
                                   float(run.fold_bacc.mean()), gap.degenerate))
    return cells
