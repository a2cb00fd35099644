import numpy as np
import pytest

from dynagraph.batching import (DEFAULT_ALPHA, IntimacyMatrix, adjacency,
                                build_subgraphs, intimacy, intimacy_rows,
                                normalize_adjacency, subgraph_batches)
from dynagraph.errors import ContractError

from conftest import make_snapshot


def dense_inverse_oracle(snapshot, alpha):
    """Brute-force reference: explicit inverse of (I - (1-alpha) * A_bar)."""
    A_bar = normalize_adjacency(snapshot)
    n = A_bar.shape[0]
    return alpha * np.linalg.inv(np.eye(n) - (1.0 - alpha) * A_bar)


def random_digraph(rng, n):
    edges = []
    for src in range(n):
        for dst in rng.choice(n, size=rng.integers(0, max(1, n // 2)), replace=False):
            if dst != src:
                edges.append((src, int(dst)))
    return make_snapshot(n, sorted(set(edges)), seed=int(rng.integers(1 << 30)))


def test_normalize_adjacency_dangling_self_loop():
    # edge 0->1 only: node 1 is dangling and gets a self-loop
    snap = make_snapshot(2, [(0, 1)])
    A = adjacency(snap)
    np.testing.assert_array_equal(A, [[0.0, 1.0], [0.0, 1.0]])
    D = np.diag(A.sum(axis=1))
    np.testing.assert_array_equal(np.linalg.inv(D) @ A, normalize_adjacency(snap))
    np.testing.assert_array_equal(normalize_adjacency(snap), [[0.0, 1.0], [0.0, 1.0]])


def test_normalize_adjacency_isolated_node():
    snap = make_snapshot(1, np.zeros((0, 2)))
    np.testing.assert_array_equal(normalize_adjacency(snap), [[1.0]])


def test_normalize_adjacency_uniform_split():
    snap = make_snapshot(3, [(0, 1), (0, 2)])
    A_bar = normalize_adjacency(snap)
    np.testing.assert_array_equal(A_bar[0], [0.0, 0.5, 0.5])


def test_intimacy_alpha_one_is_identity():
    snap = make_snapshot(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    for method in ("dense", "iterative"):
        S = intimacy(snap, alpha=1.0, method=method).scores
        assert np.array_equal(S, np.eye(4))


def test_intimacy_alpha_zero_rejected():
    snap = make_snapshot(2, [(0, 1)])
    with pytest.raises(ContractError):
        intimacy(snap, alpha=0.0)


def test_intimacy_cycle_matches_dense_inverse_oracle(cycle_snapshot):
    S = intimacy(cycle_snapshot, alpha=0.15, method="dense").scores
    np.testing.assert_allclose(S, dense_inverse_oracle(cycle_snapshot, 0.15), atol=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_iterative_matches_dense_inverse_oracle(seed):
    rng = np.random.default_rng(seed)
    snap = random_digraph(rng, int(rng.integers(2, 50)))
    expected = dense_inverse_oracle(snap, DEFAULT_ALPHA)
    for method in ("dense", "iterative"):
        S = intimacy(snap, DEFAULT_ALPHA, method=method).scores
        np.testing.assert_allclose(S, expected, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_intimacy_rows_sum_to_one_and_nonnegative(seed):
    rng = np.random.default_rng(100 + seed)
    snap = random_digraph(rng, 20)
    S = intimacy(snap, alpha=0.15).scores
    np.testing.assert_allclose(S.sum(axis=1), np.ones(20), atol=1e-9)
    assert (S >= 0).all()


def test_intimacy_asymmetric_for_directed_fixture():
    snap = make_snapshot(2, [(0, 1)])
    S = intimacy(snap, alpha=0.15).scores
    assert not np.allclose(S, S.T)
    assert S[0, 1] > 0


def test_symmetrizing_changes_intimacy():
    snap = make_snapshot(2, [(0, 1)])
    sym = make_snapshot(2, [(0, 1), (1, 0)])
    S_directed = intimacy(snap, alpha=0.15).scores
    S_sym = intimacy(sym, alpha=0.15).scores
    assert not np.allclose(S_directed, S_sym)


def test_partial_rows_match_full_matrix():
    rng = np.random.default_rng(42)
    snap = random_digraph(rng, 30)
    S = intimacy(snap, alpha=0.15, method="dense").scores
    rows = intimacy_rows(snap, [3, 17, 29], alpha=0.15)
    np.testing.assert_allclose(rows, S[[3, 17, 29]], atol=1e-9)


def test_column_rows_match_full_matrix_columns():
    rng = np.random.default_rng(43)
    snap = random_digraph(rng, 25)
    S = intimacy(snap, alpha=0.15, method="dense").scores
    cols = intimacy_rows(snap, [0, 5], alpha=0.15, rank_axis="column")
    np.testing.assert_allclose(cols, S[:, [0, 5]].T, atol=1e-9)


def test_build_subgraphs_fixed_size():
    snap = make_snapshot(20, [(i, (i + 1) % 20) for i in range(20)])
    batches = build_subgraphs(snap, intimacy(snap), k=11)
    assert len(batches) == 20
    for batch in batches:
        assert batch.size == 12
        assert batch.member_indices[0] == batch.target_index
        assert batch.mask.all()


def test_build_subgraphs_padding():
    snap = make_snapshot(3, [(0, 1), (1, 2)])
    batches = build_subgraphs(snap, intimacy(snap), k=5)
    assert len(batches) == 3
    for batch in batches:
        assert batch.size == 6
        assert batch.mask.sum() == 3
        np.testing.assert_array_equal(batch.member_indices[3:], [-1, -1, -1])
        assert not batch.features[3:].any()


def test_context_sorted_by_descending_intimacy():
    rng = np.random.default_rng(9)
    snap = random_digraph(rng, 12)
    matrix = intimacy(snap)
    for batch in build_subgraphs(snap, matrix, k=5):
        scores = matrix.scores[batch.target_index][batch.member_indices[1:]]
        assert (np.diff(scores) <= 1e-15).all()


def test_tie_break_prefers_lower_index():
    # craft scores with an exact tie between nodes 2 and 3
    snap = make_snapshot(4, [(0, 1)])
    scores = np.array([[0.1, 0.5, 0.2, 0.2],
                       [0.5, 0.1, 0.2, 0.2],
                       [0.2, 0.2, 0.5, 0.1],
                       [0.2, 0.2, 0.1, 0.5]])
    batches = build_subgraphs(snap, IntimacyMatrix(scores, 0.15), k=2)
    np.testing.assert_array_equal(batches[0].member_indices, [0, 1, 2])


def test_self_score_excluded_from_context():
    snap = make_snapshot(3, [(0, 1), (1, 0), (2, 0)])
    batches = build_subgraphs(snap, intimacy(snap), k=2)
    for batch in batches:
        assert batch.target_index not in batch.member_indices[1:]


def test_unrelated_component_edge_removal_keeps_batch():
    # two disconnected components; removing an edge in one cannot affect the other
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]
    snap = make_snapshot(6, edges)
    reduced = make_snapshot(6, [e for e in edges if e != (4, 5)])
    full_batches = build_subgraphs(snap, intimacy(snap), k=2)
    reduced_batches = build_subgraphs(reduced, intimacy(reduced), k=2)
    for i in (0, 1, 2):
        np.testing.assert_array_equal(full_batches[i].member_indices,
                                      reduced_batches[i].member_indices)


def test_subgraph_batches_chunked_matches_dense():
    rng = np.random.default_rng(11)
    snap = random_digraph(rng, 40)
    dense = subgraph_batches(snap, k=4, method="dense")
    chunked = subgraph_batches(snap, k=4, method="chunked", chunk=7)
    for a, b in zip(dense, chunked):
        np.testing.assert_array_equal(a.member_indices, b.member_indices)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.mask, b.mask)


def test_k_zero_rejected(two_node_snapshot):
    with pytest.raises(ContractError):
        subgraph_batches(two_node_snapshot, k=0)


def test_batch_cache_roundtrip(tmp_path):
    from dynagraph.batching import load_batch_cache, save_batch_cache
    rng = np.random.default_rng(21)
    snap = random_digraph(rng, 9)
    batches = {1: subgraph_batches(snap, k=3), 2: subgraph_batches(snap, k=3)}
    path = tmp_path / "batches.bin"
    save_batch_cache(path, batches, alpha=0.15, k=3, dataset_key="abc123")
    loaded = load_batch_cache(path, expect_alpha=0.15, expect_k=3,
                              expect_key="abc123")
    assert sorted(loaded) == [1, 2]
    for ts in (1, 2):
        for a, b in zip(batches[ts], loaded[ts]):
            assert a.target_index == b.target_index
            np.testing.assert_array_equal(a.member_indices, b.member_indices)
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.features, b.features)


def test_rehydrate_batches_regathers_features():
    from dynagraph.batching import rehydrate_batches
    rng = np.random.default_rng(31)
    snap = random_digraph(rng, 8)
    batches = {1: subgraph_batches(snap, k=3)}
    scaled = make_snapshot(8, snap.edges, seed=99)  # same structure, new features
    rebuilt = rehydrate_batches(batches, {1: scaled})
    for old, new in zip(batches[1], rebuilt[1]):
        np.testing.assert_array_equal(old.member_indices, new.member_indices)
        np.testing.assert_array_equal(new.features[new.mask],
                                      scaled.features[new.member_indices[new.mask]])
        assert not new.features[~new.mask].any()


def test_batch_cache_rejects_wrong_key(tmp_path):
    from dynagraph.batching import load_batch_cache, save_batch_cache
    from dynagraph.errors import ParseError
    snap = make_snapshot(4, [(0, 1)])
    path = tmp_path / "batches.bin"
    save_batch_cache(path, {1: subgraph_batches(snap, k=2)}, alpha=0.15, k=2,
                     dataset_key="one")
    with pytest.raises(ParseError, match="different dataset"):
        load_batch_cache(path, expect_key="two")
    with pytest.raises(ParseError, match="alpha"):
        load_batch_cache(path, expect_alpha=0.5)
