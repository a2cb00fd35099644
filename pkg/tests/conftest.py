import numpy as np
import pytest

from dynagraph.data import GraphSnapshot, Label, TemporalGraph


def make_snapshot(n, edges, timestep=1, feature_dim=4, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, feature_dim))
    features[:, 0] = timestep
    if labels is None:
        labels = np.full(n, int(Label.UNKNOWN), dtype=np.int8)
    return GraphSnapshot(
        timestep=timestep,
        node_ids=tuple(f"s{timestep}-{i}" for i in range(n)),
        features=features,
        labels=np.asarray(labels, dtype=np.int8),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
    )


def make_graph(snapshots):
    return TemporalGraph({s.timestep: s for s in snapshots},
                         snapshots[0].features.shape[1])


@pytest.fixture
def two_node_snapshot():
    return make_snapshot(2, [(0, 1)])


@pytest.fixture
def cycle_snapshot():
    return make_snapshot(3, [(0, 1), (1, 2), (2, 0)])
