"""Dynamic directed transaction graphs: loading, validation, synthesis.

The on-disk layout mirrors the public Elliptic release:

- features CSV, no header: ``txId, f1..f166``. f1 carries the timestep; the
  first 94 columns are local transaction features, the remaining 72 are
  neighbourhood aggregates. One row per node.
- classes CSV, header ``txId,class`` with class in {"1", "2", "unknown"}
  ("1" = illicit, "2" = licit).
- edgelist CSV, header ``txId1,txId2``; one directed edge per row with
  txId1 the payer (source) and txId2 the destination.

Node ids are opaque strings and are never parsed numerically. Snapshots are
per-timestep: no edge may connect nodes of different timesteps.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import pandas as pd

from .errors import ContractError, ParseError, ValidationError

logger = logging.getLogger(__name__)

_CACHE_MAGIC = b"DGRC"
_CACHE_VERSION = 1


class Label(IntEnum):
    LICIT = 0
    ILLICIT = 1
    UNKNOWN = -1


_CLASS_CODES = {"1": Label.ILLICIT, "2": Label.LICIT, "unknown": Label.UNKNOWN}


@dataclass(frozen=True)
class GraphSnapshot:
    """One timestep: node features, labels and directed intra-step edges."""

    timestep: int
    node_ids: tuple[str, ...]
    features: np.ndarray          # (n, d) float64
    labels: np.ndarray            # (n,) int8, values from Label
    edges: np.ndarray             # (e, 2) int64 rows of (src, dst) indices

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def labeled_indices(self) -> np.ndarray:
        # membership in the two real classes, so any junk in unknown rows
        # stays inert rather than leaking into losses or metrics
        return np.flatnonzero((self.labels == Label.LICIT) | (self.labels == Label.ILLICIT))


@dataclass(frozen=True)
class TemporalGraph:
    """Ordered per-timestep snapshots sharing one feature dimensionality."""

    snapshots: dict[int, GraphSnapshot]
    feature_dim: int

    @property
    def timesteps(self) -> list[int]:
        return sorted(self.snapshots)

    @property
    def num_nodes(self) -> int:
        return sum(s.num_nodes for s in self.snapshots.values())

    @property
    def num_edges(self) -> int:
        return sum(s.num_edges for s in self.snapshots.values())

    def snapshot(self, timestep: int) -> GraphSnapshot:
        return self.snapshots[timestep]

    def view(self, timesteps) -> "TemporalGraph":
        """A graph restricted to the given timesteps; snapshots are shared,
        nothing is copied."""
        missing = [t for t in timesteps if t not in self.snapshots]
        if missing:
            raise ContractError(f"view: timesteps {missing} not present")
        return TemporalGraph({t: self.snapshots[t] for t in sorted(timesteps)}, self.feature_dim)

    def label_counts(self) -> dict[Label, int]:
        counts = {Label.LICIT: 0, Label.ILLICIT: 0, Label.UNKNOWN: 0}
        for snap in self.snapshots.values():
            values, n = np.unique(snap.labels, return_counts=True)
            for v, c in zip(values, n):
                counts[Label(int(v))] += int(c)
        return counts


@dataclass(frozen=True)
class SplitConfig:
    """Inclusive train/test timestep ranges; must be disjoint."""

    train: tuple[int, int]
    test: tuple[int, int] | None = None

    def train_timesteps(self) -> list[int]:
        return list(range(self.train[0], self.train[1] + 1))

    def test_timesteps(self) -> list[int]:
        if self.test is None:
            return []
        return list(range(self.test[0], self.test[1] + 1))

    def validate(self, available: list[int]) -> None:
        train = set(self.train_timesteps())
        test = set(self.test_timesteps())
        if not train:
            raise ContractError(f"empty train range {self.train}")
        if self.test is not None and not test:
            raise ContractError(f"empty test range {self.test}")
        if train & test:
            raise ContractError(f"train/test ranges overlap on timesteps {sorted(train & test)}")
        outside = (train | test) - set(available)
        if outside:
            raise ContractError(f"split names timesteps {sorted(outside)} not in the graph")


def split(graph: TemporalGraph, cfg: SplitConfig) -> tuple[TemporalGraph, TemporalGraph | None]:
    """Train/test views of a graph. No data is copied or mutated."""
    cfg.validate(graph.timesteps)
    train_view = graph.view(cfg.train_timesteps())
    test_view = graph.view(cfg.test_timesteps()) if cfg.test is not None else None
    return train_view, test_view


# --- Elliptic CSV ingestion ---------------------------------------------------


def load_elliptic(features_path, classes_path, edges_path) -> TemporalGraph:
    """Load the three-file Elliptic CSV layout into a validated TemporalGraph."""
    try:
        feats = pd.read_csv(features_path, header=None, dtype={0: str})
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, ValueError) as exc:
        raise ParseError(f"{features_path}: {exc}") from exc
    if feats.shape[1] < 2:
        raise ParseError(f"{features_path}: expected txId plus feature columns, got "
                         f"{feats.shape[1]} columns")
    ids = feats.iloc[:, 0].astype(str).to_numpy()
    try:
        matrix = feats.iloc[:, 1:].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{features_path}: non-numeric feature value ({exc})") from exc
    incomplete = np.isnan(matrix).any(axis=1)
    if incomplete.any():
        line = int(np.flatnonzero(incomplete)[0]) + 1
        raise ParseError(f"{features_path}: line {line}: wrong column count "
                         "(or non-numeric value)")
    feature_dim = matrix.shape[1]

    try:
        classes = pd.read_csv(classes_path, dtype=str)
    except (pd.errors.ParserError, ValueError) as exc:
        raise ParseError(f"{classes_path}: {exc}") from exc
    if list(classes.columns[:2]) != ["txId", "class"]:
        raise ParseError(f"{classes_path}: expected header 'txId,class', got "
                         f"{list(classes.columns)}")
    known = set(ids)
    label_of: dict[str, int] = {}
    for row, (tx, cls) in enumerate(zip(classes["txId"], classes["class"]), start=2):
        tx = str(tx)
        if cls not in _CLASS_CODES:
            raise ParseError(f"{classes_path}: line {row}: unknown class value {cls!r}")
        if tx not in known:
            raise ValidationError(f"{classes_path}: line {row}: txId {tx!r} absent from "
                                  "features file")
        label_of[tx] = int(_CLASS_CODES[cls])

    try:
        edges = pd.read_csv(edges_path, dtype=str)
    except (pd.errors.ParserError, ValueError) as exc:
        raise ParseError(f"{edges_path}: {exc}") from exc
    if list(edges.columns[:2]) != ["txId1", "txId2"]:
        raise ParseError(f"{edges_path}: expected header 'txId1,txId2', got "
                         f"{list(edges.columns)}")

    # f1 is the timestep; it stays in the feature matrix untouched
    timestep_of_row = matrix[:, 0].astype(np.int64)
    if (np.abs(matrix[:, 0] - timestep_of_row) > 0).any():
        raise ParseError(f"{features_path}: first feature column must hold integral timesteps")

    order = np.argsort(timestep_of_row, kind="stable")
    snapshots: dict[int, GraphSnapshot] = {}
    index_of: dict[str, tuple[int, int]] = {}
    for ts in np.unique(timestep_of_row):
        rows = order[timestep_of_row[order] == ts]
        node_ids = tuple(ids[rows])
        labels = np.array([label_of.get(tx, int(Label.UNKNOWN)) for tx in node_ids],
                          dtype=np.int8)
        for local, tx in enumerate(node_ids):
            index_of[tx] = (int(ts), local)
        snapshots[int(ts)] = GraphSnapshot(
            timestep=int(ts),
            node_ids=node_ids,
            features=matrix[rows],
            labels=labels,
            edges=np.zeros((0, 2), dtype=np.int64),
        )

    per_ts_edges: dict[int, list[tuple[int, int]]] = {t: [] for t in snapshots}
    for row, (a, b) in enumerate(zip(edges["txId1"], edges["txId2"]), start=2):
        a, b = str(a), str(b)
        if a not in index_of or b not in index_of:
            missing = a if a not in index_of else b
            raise ValidationError(f"{edges_path}: line {row}: edge names unknown txId "
                                  f"{missing!r}")
        (ts_a, ia), (ts_b, ib) = index_of[a], index_of[b]
        if ts_a != ts_b:
            raise ValidationError(f"{edges_path}: line {row}: edge connects timesteps "
                                  f"{ts_a} and {ts_b}")
        per_ts_edges[ts_a].append((ia, ib))

    for ts, pairs in per_ts_edges.items():
        snap = snapshots[ts]
        edge_array = (np.array(pairs, dtype=np.int64) if pairs
                      else np.zeros((0, 2), dtype=np.int64))
        snapshots[ts] = GraphSnapshot(snap.timestep, snap.node_ids, snap.features,
                                      snap.labels, edge_array)

    graph = TemporalGraph(snapshots, feature_dim)
    _warn_disconnected(graph)
    return graph


def _warn_disconnected(graph: TemporalGraph) -> None:
    # advisory only: production data is declared single-component, fixtures
    # need not be
    fragmented = [t for t, s in graph.snapshots.items()
                  if weak_component_count(s) > 1]
    if fragmented:
        logger.warning("snapshots with multiple weakly-connected components: %s",
                       fragmented)


def weak_component_count(snapshot: GraphSnapshot) -> int:
    """Number of weakly-connected components (direction ignored)."""
    n = snapshot.num_nodes
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for src, dst in snapshot.edges:
        a, b = find(int(src)), find(int(dst))
        if a != b:
            parent[a] = b
    return len({find(i) for i in range(n)})


# --- synthetic generator ------------------------------------------------------


def generate_synthetic(T: int, nodes_per_step: int, illicit_frac: float, seed: int,
                       feature_dim: int = 16, label_frac: float = 0.6,
                       avg_out_degree: float = 2.0, class_shift: float = 1.5,
                       homophily: float = 0.85) -> TemporalGraph:
    """Random directed temporal graph with separable classes.

    Every node draws a latent class (illicit with probability
    ``illicit_frac``); illicit nodes get all non-time features shifted by
    ``class_shift`` so even a linear model can tell the classes apart. Edges
    prefer same-class endpoints with probability ``homophily``, the way
    fraud rings transact among themselves, so context aggregation helps
    rather than dilutes. A ``label_frac`` share of nodes reveal their class,
    the rest stay Unknown. Feature column 0 carries the timestep, mirroring
    the production layout.
    """
    if T < 1:
        raise ContractError(f"T must be >= 1, got {T}")
    if nodes_per_step < 2:
        raise ContractError(f"nodes_per_step must be >= 2, got {nodes_per_step}")
    if not 0.0 <= illicit_frac <= 1.0:
        raise ContractError(f"illicit_frac must lie in [0, 1], got {illicit_frac}")
    if not 0.0 < label_frac <= 1.0:
        raise ContractError(f"label_frac must lie in (0, 1], got {label_frac}")
    if feature_dim < 2:
        raise ContractError(f"feature_dim must be >= 2, got {feature_dim}")
    if not 0.0 <= homophily <= 1.0:
        raise ContractError(f"homophily must lie in [0, 1], got {homophily}")

    rng = np.random.default_rng(seed)
    snapshots: dict[int, GraphSnapshot] = {}
    for ts in range(1, T + 1):
        n = nodes_per_step
        is_illicit = rng.random(n) < illicit_frac
        revealed = rng.random(n) < label_frac
        labels = np.full(n, int(Label.UNKNOWN), dtype=np.int8)
        labels[revealed & is_illicit] = int(Label.ILLICIT)
        labels[revealed & ~is_illicit] = int(Label.LICIT)

        features = rng.standard_normal((n, feature_dim))
        features[:, 0] = ts
        features[is_illicit, 1:] += class_shift

        pairs = set()
        degrees = rng.poisson(avg_out_degree, size=n)
        for src in range(n):
            same = np.flatnonzero(is_illicit == is_illicit[src])
            same = same[same != src]
            for _ in range(int(degrees[src])):
                pool = same if (len(same) and rng.random() < homophily) else None
                if pool is None:
                    dst = int(rng.integers(n - 1))
                    dst += dst >= src
                else:
                    dst = int(pool[rng.integers(len(pool))])
                pairs.add((src, dst))
        edges = np.array(sorted(pairs), dtype=np.int64) if pairs \
            else np.zeros((0, 2), dtype=np.int64)

        snapshots[ts] = GraphSnapshot(
            timestep=ts,
            node_ids=tuple(f"s{ts}-{i}" for i in range(n)),
            features=features,
            labels=labels,
            edges=edges,
        )
    return TemporalGraph(snapshots, feature_dim)


# --- standardization ----------------------------------------------------------


def feature_stats(graph: TemporalGraph, timesteps) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and standard deviation over the given timesteps."""
    stacked = np.concatenate([graph.snapshots[t].features for t in timesteps], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std < 1e-12] = 1.0  # constant features: centre only
    return mean, std


def standardize(graph: TemporalGraph, mean: np.ndarray, std: np.ndarray) -> TemporalGraph:
    """Graph with z-scored features (new feature arrays; structure shared)."""
    snapshots = {}
    for t, s in graph.snapshots.items():
        snapshots[t] = GraphSnapshot(s.timestep, s.node_ids, (s.features - mean) / std,
                                     s.labels, s.edges)
    return TemporalGraph(snapshots, graph.feature_dim)


# --- binary cache -------------------------------------------------------------


def _serialize(graph: TemporalGraph) -> bytes:
    buf = io.BytesIO()
    buf.write(_CACHE_MAGIC)
    buf.write(struct.pack("<BII", _CACHE_VERSION, graph.feature_dim,
                          len(graph.snapshots)))
    for t in graph.timesteps:
        s = graph.snapshots[t]
        ids_blob = json.dumps(list(s.node_ids)).encode("utf-8")
        buf.write(struct.pack("<iIIQ", s.timestep, s.num_nodes, s.num_edges,
                              len(ids_blob)))
        buf.write(ids_blob)
        buf.write(s.labels.astype("<i1").tobytes())
        buf.write(s.features.astype("<f8").tobytes())
        buf.write(s.edges.astype("<i8").tobytes())
    return buf.getvalue()


def graph_fingerprint(graph: TemporalGraph) -> str:
    """Stable content hash, used to key derived caches to their dataset."""
    return hashlib.sha256(_serialize(graph)).hexdigest()[:16]


def save_cache(graph: TemporalGraph, path) -> None:
    """Write the compact binary snapshot cache (avoids re-parsing large CSVs)."""
    with open(path, "wb") as fh:
        fh.write(_serialize(graph))


def load_cache(path) -> TemporalGraph:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CACHE_MAGIC:
        raise ParseError(f"{path}: not a graph cache file (bad magic)")
    version, feature_dim, count = struct.unpack_from("<BII", raw, 4)
    if version != _CACHE_VERSION:
        raise ParseError(f"{path}: unsupported cache version {version}")
    offset = 4 + struct.calcsize("<BII")
    snapshots: dict[int, GraphSnapshot] = {}
    for _ in range(count):
        timestep, n, e, ids_len = struct.unpack_from("<iIIQ", raw, offset)
        offset += struct.calcsize("<iIIQ")
        node_ids = tuple(json.loads(raw[offset:offset + ids_len].decode("utf-8")))
        offset += ids_len
        labels = np.frombuffer(raw, dtype="<i1", count=n, offset=offset).copy()
        offset += n
        features = np.frombuffer(raw, dtype="<f8", count=n * feature_dim,
                                 offset=offset).reshape(n, feature_dim).copy()
        offset += n * feature_dim * 8
        edges = np.frombuffer(raw, dtype="<i8", count=e * 2,
                              offset=offset).reshape(e, 2).copy()
        offset += e * 16
        snapshots[timestep] = GraphSnapshot(timestep, node_ids, features,
                                            labels.astype(np.int8), edges)
    return TemporalGraph(snapshots, feature_dim)
