import numpy as np
import pytest
import scipy.stats

from dynagraph.data import GraphSnapshot, Label, TemporalGraph
from dynagraph.errors import ContractError
from dynagraph.stats import (acf, chi2_rank, chi2_statistic, feature_summary,
                             ks_two_sample, pca_top2, shutdown_analysis,
                             timestep_mean_pca_clusters)



# --- PCA ---------------------------------------------------------------


def test_pca_line_fixture():
    t = np.linspace(-2, 2, 50)
    points = np.stack([t, t], axis=1)
    components, projected, explained = pca_top2(points)
    np.testing.assert_allclose(components[:, 0], [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert explained[1] == pytest.approx(0.0, abs=1e-12)


def test_pca_isotropic_gaussian_balanced_variance():
    rng = np.random.default_rng(0)
    _, _, explained = pca_top2(rng.standard_normal((4000, 2)))
    assert abs(explained[0] - explained[1]) / explained[0] < 0.2


def test_pca_projected_zero_mean():
    rng = np.random.default_rng(1)
    _, projected, _ = pca_top2(rng.standard_normal((300, 6)) * 3 + 1.5)
    np.testing.assert_allclose(projected.mean(axis=0), [0.0, 0.0], atol=1e-10)


def test_pca_backprojection_recovers_centered_2d_data():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((200, 2)) @ np.array([[2.0, 0.3], [0.1, 0.5]])
    components, projected, _ = pca_top2(X)
    reconstructed = projected @ components.T
    np.testing.assert_allclose(reconstructed, X - X.mean(axis=0), atol=1e-10)


def test_pca_sign_convention():
    rng = np.random.default_rng(3)
    components, _, _ = pca_top2(rng.standard_normal((100, 4)))
    for j in range(2):
        lead = np.argmax(np.abs(components[:, j]))
        assert components[lead, j] > 0


def test_pca_zero_variance_rejected():
    with pytest.raises(ContractError):
        pca_top2(np.ones((10, 3)))


# --- timestep clustering ----------------------------------------------------


def separated_group_graph():
    snaps = []
    rng = np.random.default_rng(4)
    for ts in range(1, 5):
        shift = 0.0 if ts <= 2 else 25.0
        feats = rng.standard_normal((30, 3)) + shift
        snaps.append(GraphSnapshot(ts, tuple(f"n{ts}-{i}" for i in range(30)),
                                   feats, np.full(30, -1, dtype=np.int8),
                                   np.zeros((0, 2), dtype=np.int64)))
    return TemporalGraph({s.timestep: s for s in snaps}, 3)


def test_cluster_separated_timestep_groups():
    assignments, _, _ = timestep_mean_pca_clusters(separated_group_graph(), 2)
    assert assignments[0] == assignments[1]
    assert assignments[2] == assignments[3]
    assert assignments[0] != assignments[2]


def test_single_cluster():
    assignments, _, _ = timestep_mean_pca_clusters(separated_group_graph(), 1)
    assert set(assignments) == {0}


def test_identical_timesteps_zero_inertia():
    rng = np.random.default_rng(5)
    feats = rng.standard_normal((20, 3))
    snaps = [GraphSnapshot(ts, tuple(f"n{ts}-{i}" for i in range(20)), feats.copy(),
                           np.full(20, -1, dtype=np.int8),
                           np.zeros((0, 2), dtype=np.int64))
             for ts in range(1, 4)]
    graph = TemporalGraph({s.timestep: s for s in snaps}, 3)
    _, _, inertia = timestep_mean_pca_clusters(graph, 2)
    assert inertia == pytest.approx(0.0, abs=1e-18)


def test_too_many_clusters_rejected():
    with pytest.raises(ContractError):
        timestep_mean_pca_clusters(separated_group_graph(), 9)


# --- autocorrelation ---------------------------------------------------------


def test_acf_lag_zero_is_one():
    rng = np.random.default_rng(6)
    r = acf(rng.standard_normal(50), 5)
    assert r[0] == pytest.approx(1.0, rel=1e-12)


def test_acf_alternating_series():
    series = np.array([1.0, -1.0] * 20)
    r = acf(series, 1)
    assert r[1] == pytest.approx(-1.0, abs=0.05)


def test_acf_ar1_simulation():
    rng = np.random.default_rng(7)
    x = np.zeros(200)
    for t in range(1, 200):
        x[t] = 0.8 * x[t - 1] + rng.standard_normal()
    r = acf(x, 3)
    assert 0.6 <= r[1] <= 0.95


def test_acf_bounded():
    rng = np.random.default_rng(8)
    r = acf(rng.standard_normal(120), 30)
    assert (np.abs(r) <= 1.0 + 1e-12).all()


def test_acf_constant_series_rejected():
    with pytest.raises(ContractError):
        acf(np.ones(10), 2)


def test_acf_lag_too_large_rejected():
    with pytest.raises(ContractError):
        acf(np.arange(5.0), 5)


# --- chi-square ranking -------------------------------------------------------


def test_chi2_hand_table():
    assert chi2_statistic(np.array([[10, 0], [0, 10]])) == pytest.approx(20.0, rel=1e-12)


def test_chi2_identical_feature_ranked_last():
    rng = np.random.default_rng(9)
    X = np.column_stack([rng.standard_normal(200), np.full(200, 3.0)])
    y = np.array([Label.ILLICIT] * 100 + [Label.LICIT] * 100)
    ranking = chi2_rank(X, y)
    assert ranking.entries[-1][0] == 1
    assert ranking.entries[-1][1] == pytest.approx(0.0, abs=1e-12)


def test_chi2_perfect_separator_ranked_first():
    rng = np.random.default_rng(10)
    y = np.array([Label.ILLICIT] * 80 + [Label.LICIT] * 120)
    X = np.column_stack([
        rng.standard_normal(200),
        (y == Label.ILLICIT).astype(float),   # perfect separator
        rng.standard_normal(200) * 2,
    ])
    ranking = chi2_rank(X, y)
    assert ranking.entries[0][0] == 1


def test_chi2_affine_rescaling_invariant():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((300, 5))
    y = np.where(rng.random(300) < 0.4, Label.ILLICIT, Label.LICIT)
    X[:, 2] += (y == Label.ILLICIT) * 1.0
    base = chi2_rank(X, y)
    rescaled = X * np.array([3.7, -2.0, 0.5, 10.0, 1.0]) + np.array([1, 2, 3, 4, 5])
    again = chi2_rank(rescaled, y)
    assert [j for j, _ in base.entries] == [j for j, _ in again.entries]
    np.testing.assert_allclose([s for _, s in base.entries],
                               [s for _, s in again.entries], rtol=1e-9)


def test_chi2_single_class_rejected():
    X = np.random.default_rng(12).standard_normal((10, 2))
    with pytest.raises(ContractError):
        chi2_rank(X, np.full(10, Label.LICIT))


def test_chi2_unknown_rows_rejected():
    X = np.zeros((4, 2))
    y = np.array([Label.LICIT, Label.ILLICIT, Label.UNKNOWN, Label.LICIT])
    with pytest.raises(ContractError):
        chi2_rank(X, y)


def test_chi2_needs_two_bins():
    X = np.zeros((4, 2))
    y = np.array([Label.LICIT, Label.ILLICIT, Label.LICIT, Label.ILLICIT])
    with pytest.raises(ContractError):
        chi2_rank(X, y, bins=1)


# --- Kolmogorov-Smirnov -------------------------------------------------------


def test_ks_identical_samples():
    a = np.array([0.3, 1.2, -0.5, 0.3])
    result = ks_two_sample(a, a.copy())
    assert result.d_statistic == 0.0
    assert result.p_value == 1.0


def test_ks_disjoint_supports():
    rng = np.random.default_rng(13)
    result = ks_two_sample(rng.random(40), rng.random(30) + 2.0)
    assert result.d_statistic == 1.0
    assert result.p_value < 1e-6


def test_ks_same_distribution_not_rejected():
    rng = np.random.default_rng(3)
    result = ks_two_sample(rng.standard_normal(500), rng.standard_normal(500))
    assert result.p_value > 0.05


def test_ks_monotone_transform_invariance_exact():
    rng = np.random.default_rng(15)
    a = rng.standard_normal(80)
    b = rng.standard_normal(60) + 0.4
    base = ks_two_sample(a, b)
    mapped = ks_two_sample(np.exp(a), np.exp(b))
    assert base.d_statistic == mapped.d_statistic
    assert base.p_value == mapped.p_value


def test_ks_matches_scipy_asymptotic():
    rng = np.random.default_rng(16)
    a = rng.standard_normal(200)
    b = rng.standard_normal(150) + 0.3
    ours = ks_two_sample(a, b)
    ref_d = scipy.stats.ks_2samp(a, b).statistic
    assert ours.d_statistic == pytest.approx(ref_d, rel=1e-12)
    # the p-value contract is the plain Kolmogorov tail at sqrt(n_eff) * D;
    # scipy's kstwobign is an independent implementation of that function
    en = len(a) * len(b) / (len(a) + len(b))
    ref_p = scipy.stats.kstwobign.sf(np.sqrt(en) * ours.d_statistic)
    assert ours.p_value == pytest.approx(ref_p, rel=1e-9, abs=1e-12)


def test_ks_empty_sample_rejected():
    with pytest.raises(ContractError):
        ks_two_sample(np.array([]), np.array([1.0]))


# --- moment summaries ---------------------------------------------------------


def test_summary_symmetric_sample_zero_skewness():
    x = np.array([1.0, 2.0, 3.0, 5.0])
    s = feature_summary(np.concatenate([x, -x]))
    assert s.skewness == 0.0


def test_summary_two_point_kurtosis_plain():
    x = np.array([-1.0, 1.0] * 50)
    s = feature_summary(x, bias_corrected=False)
    assert s.kurtosis == pytest.approx(-2.0, rel=1e-12)
    assert s.skewness == 0.0


def test_summary_two_point_kurtosis_adjusted_closed_form():
    n = 100
    x = np.array([-1.0, 1.0] * (n // 2))
    s = feature_summary(x, bias_corrected=True)
    expected = ((n + 1) * -2.0 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    assert s.kurtosis == pytest.approx(expected, rel=1e-12)


def test_summary_matches_scipy_estimators():
    rng = np.random.default_rng(17)
    x = rng.gamma(2.0, size=500)
    s = feature_summary(x)
    assert s.mean == pytest.approx(x.mean(), rel=1e-12)
    assert s.stdev == pytest.approx(x.std(ddof=1), rel=1e-12)
    assert s.skewness == pytest.approx(scipy.stats.skew(x, bias=False), rel=1e-9)
    assert s.kurtosis == pytest.approx(scipy.stats.kurtosis(x, bias=False), rel=1e-9)


def test_summary_needs_variation():
    with pytest.raises(ContractError):
        feature_summary(np.ones(10))


# --- shutdown analysis ---------------------------------------------------


def shifted_graph(shift_after, T=6, n=80, boundary=4, seed=18):
    """Timestep-free features so pre/post distributions are genuinely
    identical per class unless shift_after moves the late snapshots."""
    rng = np.random.default_rng(seed)
    snaps = {}
    for ts in range(1, T + 1):
        labels = np.where(rng.random(n) < 0.4, Label.ILLICIT, Label.LICIT).astype(np.int8)
        feats = rng.standard_normal((n, 5))
        feats[labels == Label.ILLICIT] += 1.0
        if ts >= boundary:
            feats += shift_after
        snaps[ts] = GraphSnapshot(ts, tuple(f"n{ts}-{i}" for i in range(n)), feats,
                                  labels, np.zeros((0, 2), dtype=np.int64))
    return TemporalGraph(snaps, 5)


def test_shutdown_identical_distributions_not_rejected():
    report = shutdown_analysis(shifted_graph(0.0), boundary=4)
    for rows in report.ks_results.values():
        for _, ks in rows:
            assert ks.p_value > 0.01


def test_shutdown_shifted_distributions_rejected():
    report = shutdown_analysis(shifted_graph(3.0), boundary=4)
    assert report.common_features  # some features stay jointly significant
    flat = [ks.p_value for rows in report.ks_results.values() for _, ks in rows]
    assert min(flat) < 1e-5


def test_shutdown_report_structure():
    report = shutdown_analysis(shifted_graph(1.0), boundary=4)
    assert len(report.top_before.top(10)) <= 5  # only 5 features exist here
    assert set(report.summaries) == {("illicit", "before"), ("illicit", "after"),
                                     ("licit", "before"), ("licit", "after")}
    text = report.to_text()
    assert "common features" in text
    assert report.summary_csv().startswith("category,period,feature,")
    assert report.ks_csv().startswith("category,feature,")


def test_shutdown_boundary_one_rejected():
    with pytest.raises(ContractError):
        shutdown_analysis(shifted_graph(0.0), boundary=1)


def test_shutdown_boundary_out_of_range_rejected():
    with pytest.raises(ContractError):
        shutdown_analysis(shifted_graph(0.0), boundary=40)
