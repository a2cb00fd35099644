"""Statistical analyses of the transaction features.

Covers the exploratory and event-study tooling: top-2 PCA with per-timestep
mean clustering, autocorrelation of the component means across timesteps,
chi-square feature ranking against the class labels on binned features,
two-sample Kolmogorov-Smirnov tests, and four-moment feature summaries —
all used to quantify how transaction behaviour shifts around the dark-market
shutdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Label, TemporalGraph
from .errors import ContractError

DEFAULT_BINS = 10


@dataclass(frozen=True)
class FeatureSummary:
    feature_index: int
    mean: float
    stdev: float        # sample, n-1
    skewness: float
    kurtosis: float     # excess (normal = 0)


@dataclass(frozen=True)
class KSResult:
    d_statistic: float
    p_value: float
    n1: int
    n2: int


@dataclass(frozen=True)
class Chi2Ranking:
    """(feature_index, statistic) pairs, descending by statistic with ties
    broken by ascending index."""

    entries: tuple[tuple[int, float], ...]

    def top(self, count: int) -> list[int]:
        return [idx for idx, _ in self.entries[:count]]


# --- PCA ------------------------------------------------------------------


def pca_top2(features: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-2 principal components of the sample covariance.

    Returns (components (d, 2), projected (n, 2), explained_variance (2,)).
    Sign convention: the largest-magnitude entry of each component is
    positive, so results are reproducible across eigensolvers.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ContractError(f"pca_top2 needs an (n>=2, d) matrix, got {X.shape}")
    centered = X - X.mean(axis=0)
    if not centered.any():
        raise ContractError("pca_top2: zero-variance data")
    cov = centered.T @ centered / (X.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:2]
    components = eigenvectors[:, order]
    for j in range(components.shape[1]):
        lead = np.argmax(np.abs(components[:, j]))
        if components[lead, j] < 0:
            components[:, j] = -components[:, j]
    projected = centered @ components
    return components, projected, eigenvalues[order]


def timestep_mean_pca_clusters(graph: TemporalGraph, n_clusters: int,
                               seed: int = 0, restarts: int = 100
                               ) -> tuple[np.ndarray, np.ndarray, float]:
    """K-means over the per-timestep means of the top-2 projected components.

    Returns (assignments aligned with sorted timesteps, per-timestep means
    (T, 2), inertia). Uses k-means++ seeding with ``restarts`` restarts and
    keeps the lowest-inertia solution.
    """
    timesteps = graph.timesteps
    if n_clusters < 1:
        raise ContractError("n_clusters must be >= 1")
    if n_clusters > len(timesteps):
        raise ContractError(f"n_clusters={n_clusters} exceeds {len(timesteps)} timesteps")
    stacked = np.concatenate([graph.snapshots[t].features for t in timesteps], axis=0)
    _, projected, _ = pca_top2(stacked)
    offsets = np.cumsum([0] + [graph.snapshots[t].num_nodes for t in timesteps])
    means = np.stack([projected[offsets[i]:offsets[i + 1]].mean(axis=0)
                      for i in range(len(timesteps))])
    assignments, inertia = _kmeans(means, n_clusters, seed=seed, restarts=restarts)
    return assignments, means, inertia


def _kmeans(points: np.ndarray, k: int, seed: int, restarts: int,
            max_iter: int = 300) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    best_assign, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = _kmeans_pp_init(points, k, rng)
        for _ in range(max_iter):
            d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            assign = d2.argmin(axis=1)
            new_centers = centers.copy()
            for j in range(k):
                member = points[assign == j]
                if len(member):
                    new_centers[j] = member.mean(axis=0)
            if np.array_equal(new_centers, centers):
                break
            centers = new_centers
        inertia = float(((points - centers[assign]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia, best_assign = inertia, assign
    return best_assign, best_inertia


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = np.min([(np.linalg.norm(points - c, axis=1) ** 2) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0.0:   # duplicate points: any choice is equivalent
            centers.append(points[rng.integers(len(points))])
            continue
        centers.append(points[rng.choice(len(points), p=d2 / total)])
    return np.stack(centers)


# --- autocorrelation --------------------------------------------------------


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelation r(h) for h = 0..max_lag."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("acf expects a 1-D series")
    if max_lag >= len(x):
        raise ContractError(f"max_lag={max_lag} must be < series length {len(x)}")
    centered = x - x.mean()
    denom = (centered * centered).sum()
    if denom <= 0.0:
        raise ContractError("acf: constant series has no autocorrelation")
    return np.array([(centered[:len(x) - h] * centered[h:]).sum() / denom
                     for h in range(max_lag + 1)])


# --- chi-square feature ranking ---------------------------------------------


def chi2_statistic(table: np.ndarray) -> float:
    """Pearson chi-square statistic of a contingency table."""
    observed = np.asarray(table, dtype=np.float64)
    total = observed.sum()
    if total <= 0:
        raise ContractError("chi2_statistic: empty table")
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / total
    mask = expected > 0
    return float(((observed[mask] - expected[mask]) ** 2 / expected[mask]).sum())


def _binned_counts(values: np.ndarray, is_positive: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        # constant feature: single bucket, zero association by construction
        return np.array([[float((~is_positive).sum()), float(is_positive.sum())]])
    scaled = (values - lo) / (hi - lo)
    idx = np.minimum((scaled * bins).astype(np.int64), bins - 1)
    table = np.zeros((bins, 2))
    np.add.at(table, (idx, is_positive.astype(np.int64)), 1.0)
    return table


def chi2_rank(features: np.ndarray, labels: np.ndarray,
              bins: int = DEFAULT_BINS) -> Chi2Ranking:
    """Rank features by chi-square association between binned values and class.

    Each feature is min-max scaled to [0, 1] and discretised into ``bins``
    equal-width buckets; the statistic comes from the bucket-by-class
    contingency table. Only rows labelled licit/illicit are admissible.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if bins < 2:
        raise ContractError("bins must be >= 2")
    if (y == Label.UNKNOWN).any():
        raise ContractError("chi2_rank: drop Unknown-labelled rows first")
    if len(np.unique(y)) < 2:
        raise ContractError("chi2_rank: needs both classes present")
    is_illicit = y == Label.ILLICIT
    stats = [chi2_statistic(_binned_counts(X[:, j], is_illicit, bins))
             for j in range(X.shape[1])]
    order = sorted(range(X.shape[1]), key=lambda j: (-stats[j], j))
    return Chi2Ranking(tuple((j, stats[j]) for j in order))


# --- Kolmogorov-Smirnov -------------------------------------------------------


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> KSResult:
    """Two-sample KS test with the asymptotic p-value.

    D is the supremum of the absolute ECDF difference; the p-value evaluates
    the Kolmogorov tail series 2*sum((-1)^(j-1) exp(-2 j^2 lambda^2)) at
    lambda = sqrt(n1*n2/(n1+n2)) * D, truncated at 1e-12.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ContractError("ks_two_sample: empty sample")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    d = float(np.abs(cdf_a - cdf_b).max())
    effective_n = len(a) * len(b) / (len(a) + len(b))
    return KSResult(d, _kolmogorov_sf(math.sqrt(effective_n) * d), len(a), len(b))


def _kolmogorov_sf(lam: float, tol: float = 1e-12, max_terms: int = 100_000) -> float:
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for j in range(1, max_terms + 1):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < tol:
            break
    return min(1.0, max(0.0, 2.0 * total))


# --- moment summaries ---------------------------------------------------------


def feature_summary(values: np.ndarray, feature_index: int = 0,
                    bias_corrected: bool = True) -> FeatureSummary:
    """Mean, sample stdev, skewness and excess kurtosis of one feature.

    With ``bias_corrected`` the adjusted sample estimators are used
    (the plain moment ratios otherwise); kurtosis is excess in both cases.
    """
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ContractError("feature_summary needs at least 2 values")
    mean = float(x.mean())
    centered = x - mean
    m2 = float((centered ** 2).mean())
    m3 = float((centered ** 3).mean())
    m4 = float((centered ** 4).mean())
    stdev = float(x.std(ddof=1))
    if m2 == 0.0:
        raise ContractError("feature_summary: constant values have no shape moments")
    g1 = m3 / m2 ** 1.5
    g2 = m4 / m2 ** 2 - 3.0
    if bias_corrected:
        if n < 4:
            raise ContractError("bias-corrected moments need at least 4 values")
        skew = math.sqrt(n * (n - 1)) / (n - 2) * g1
        kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    else:
        skew, kurt = g1, g2
    return FeatureSummary(feature_index, mean, stdev, skew, kurt)


# --- shutdown event study -------------------------------------------------


@dataclass(frozen=True)
class ShutdownReport:
    boundary: int
    top_before: Chi2Ranking
    top_after: Chi2Ranking
    common_features: tuple[int, ...]
    summaries: dict[tuple[str, str], tuple[FeatureSummary, ...]]
    ks_results: dict[str, tuple[tuple[int, KSResult], ...]]

    def to_text(self) -> str:
        lines = [f"shutdown boundary: first post timestep = {self.boundary}",
                 f"top features before: {self.top_before.top(10)}",
                 f"top features after:  {self.top_after.top(10)}",
                 f"common features ({len(self.common_features)} shared): "
                 f"{list(self.common_features)}", ""]
        header = f"{'category':<24}{'feature':>8}{'mean':>12}{'stdev':>12}" \
                 f"{'skewness':>12}{'kurtosis':>12}"
        lines.append(header)
        for (category, period), rows in self.summaries.items():
            for s in rows:
                lines.append(f"{category + ' ' + period:<24}{s.feature_index:>8}"
                             f"{s.mean:>12.4f}{s.stdev:>12.4f}"
                             f"{s.skewness:>12.4f}{s.kurtosis:>12.4f}")
        lines.append("")
        lines.append(f"{'category':<12}{'feature':>8}{'KS D':>12}{'p-value':>14}")
        for category, rows in self.ks_results.items():
            for feature, ks in rows:
                lines.append(f"{category:<12}{feature:>8}{ks.d_statistic:>12.4f}"
                             f"{ks.p_value:>14.4e}")
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        out = ["category,period,feature,mean,stdev,skewness,kurtosis"]
        for (category, period), rows in self.summaries.items():
            for s in rows:
                out.append(f"{category},{period},{s.feature_index},{s.mean!r},"
                           f"{s.stdev!r},{s.skewness!r},{s.kurtosis!r}")
        return "\n".join(out) + "\n"

    def ks_csv(self) -> str:
        out = ["category,feature,d_statistic,p_value,n_before,n_after"]
        for category, rows in self.ks_results.items():
            for feature, ks in rows:
                out.append(f"{category},{feature},{ks.d_statistic!r},{ks.p_value!r},"
                           f"{ks.n1},{ks.n2}")
        return "\n".join(out) + "\n"


def _labeled_features(graph: TemporalGraph, timesteps) -> tuple[np.ndarray, np.ndarray]:
    rows, labels = [], []
    for ts in timesteps:
        snap = graph.snapshots[ts]
        idx = snap.labeled_indices()
        rows.append(snap.features[idx])
        labels.append(snap.labels[idx])
    return np.concatenate(rows, axis=0), np.concatenate(labels)


def shutdown_analysis(graph: TemporalGraph, boundary: int = 43, top: int = 10,
                      bins: int = DEFAULT_BINS) -> ShutdownReport:
    """Chi-square top features before/after the boundary, plus moment and KS
    comparisons of the common features per class."""
    timesteps = graph.timesteps
    if boundary not in timesteps:
        raise ContractError(f"boundary {boundary} not among timesteps {timesteps[:3]}..")
    before_ts = [t for t in timesteps if t < boundary]
    after_ts = [t for t in timesteps if t >= boundary]
    if not before_ts or not after_ts:
        raise ContractError(f"boundary {boundary} leaves an empty before/after window")

    X_before, y_before = _labeled_features(graph, before_ts)
    X_after, y_after = _labeled_features(graph, after_ts)
    rank_before = chi2_rank(X_before, y_before, bins=bins)
    rank_after = chi2_rank(X_after, y_after, bins=bins)
    common = tuple(j for j in rank_before.top(top) if j in set(rank_after.top(top)))

    summaries: dict[tuple[str, str], tuple[FeatureSummary, ...]] = {}
    ks_results: dict[str, tuple[tuple[int, KSResult], ...]] = {}
    for category, label in (("illicit", Label.ILLICIT), ("licit", Label.LICIT)):
        per_period = {}
        for period, X, y in (("before", X_before, y_before), ("after", X_after, y_after)):
            rows = X[y == label]
            per_period[period] = rows
            summaries[(category, period)] = tuple(
                feature_summary(rows[:, j], j) for j in common)
        ks_results[category] = tuple(
            (j, ks_two_sample(per_period["before"][:, j], per_period["after"][:, j]))
            for j in common)
    return ShutdownReport(boundary, rank_before, rank_after, common, summaries, ks_results)
