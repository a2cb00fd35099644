"""Scikit-learn style wrappers around the pipeline.

Both classes follow the estimator conventions (``get_params``/``set_params``
via ``BaseEstimator``, ``fit`` returning self, ``NotFittedError`` before
fitting) so they compose with ``sklearn.base.clone`` and friends, even
though X is a :class:`~dynagraph.data.TemporalGraph` rather than an array.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .batching import subgraph_batches
from .data import (GraphSnapshot, SplitConfig, TemporalGraph, feature_stats,
                   standardize)
from .errors import ContractError
from .model import GraphTransformerGRU, ModelConfig
from .training import (TrainConfig, classification_metrics, evaluate, finetune,
                       precompute_batches, predict_view, pretrain)


def check_temporal_graph(X) -> TemporalGraph:
    """Validate the estimator input; raises for anything but a TemporalGraph."""
    if not isinstance(X, TemporalGraph):
        raise TypeError(f"expected a TemporalGraph, got {type(X).__name__}")
    if not X.snapshots:
        raise ContractError("graph has no snapshots")
    return X


class SubgraphBatcher(BaseEstimator, TransformerMixin):
    """Stateless transformer turning snapshots into fixed-size subgraph batches.

    Parameters
    ----------
    k : int
        Context nodes per target; every batch has k+1 rows.
    alpha : float
        Restart probability of the intimacy computation, in (0, 1].
    rank_axis : str
        "row" ranks context by the target's outgoing intimacy scores,
        "column" by incoming ones.
    method : str
        "auto", "dense", "iterative" or "chunked" intimacy strategy.
    """

    def __init__(self, k: int = 11, alpha: float = 0.15, rank_axis: str = "row",
                 method: str = "auto"):
        self.k = k
        self.alpha = alpha
        self.rank_axis = rank_axis
        self.method = method

    def fit(self, X, y=None):
        if isinstance(X, GraphSnapshot):
            return self
        check_temporal_graph(X)
        return self

    def transform(self, X):
        """Batches for a snapshot (list) or a temporal graph (dict by timestep)."""
        if isinstance(X, GraphSnapshot):
            return subgraph_batches(X, self.k, alpha=self.alpha,
                                    rank_axis=self.rank_axis, method=self.method)
        check_temporal_graph(X)
        return {ts: subgraph_batches(X.snapshots[ts], self.k, alpha=self.alpha,
                                     rank_axis=self.rank_axis, method=self.method)
                for ts in X.timesteps}


class TemporalGraphClassifier(BaseEstimator):
    """Licit/illicit node classifier over dynamic directed transaction graphs.

    ``fit`` standardises features on the train timesteps, pre-trains the
    subgraph encoder on feature reconstruction, then fine-tunes the full
    network for classification. ``predict`` rolls the recurrent state through
    the given graph chronologically, so predictions for late timesteps see
    the history of earlier ones.

    Parameters
    ----------
    train_timesteps, test_timesteps : tuple[int, int] | None
        Inclusive timestep ranges. Defaults to all timesteps for training
        and no test evaluation during fit.
    hidden_dim, layers, k, alpha, dropout, residual :
        Encoder architecture and batching controls.
    lr, epochs, pretrain_epochs, class_weights, eval_every, bptt_mode :
        Optimisation controls; ``class_weights`` is ordered (licit, illicit).
    ablation_no_gru : bool
        Freeze the mixing weights at (1, 0) and skip recurrent updates.
    standardize : bool
        Z-score features using train-timestep statistics.
    """

    def __init__(self, hidden_dim: int = 32, layers: int = 2, k: int = 11,
                 alpha: float = 0.15, dropout: float = 0.1, residual: str = "raw",
                 lr: float = 1e-3, epochs: int = 200, pretrain_epochs: int = 50,
                 class_weights: tuple[float, float] = (0.3, 0.7),
                 eval_every: int = 20, bptt_mode: str = "detached",
                 ablation_no_gru: bool = False, standardize: bool = True,
                 train_timesteps=None, test_timesteps=None, seed: int = 0):
        self.hidden_dim = hidden_dim
        self.layers = layers
        self.k = k
        self.alpha = alpha
        self.dropout = dropout
        self.residual = residual
        self.lr = lr
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.class_weights = class_weights
        self.eval_every = eval_every
        self.bptt_mode = bptt_mode
        self.ablation_no_gru = ablation_no_gru
        self.standardize = standardize
        self.train_timesteps = train_timesteps
        self.test_timesteps = test_timesteps
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, seed=self.seed,
                           class_weights=tuple(self.class_weights),
                           pretrain_epochs=self.pretrain_epochs,
                           bptt_mode=self.bptt_mode,
                           ablation_no_gru=self.ablation_no_gru,
                           eval_every=self.eval_every)

    def fit(self, X, y=None):
        """Train on the graph's labelled nodes; labels live in the graph itself."""
        graph = check_temporal_graph(X)
        train_range = self.train_timesteps or (graph.timesteps[0], graph.timesteps[-1])
        split_cfg = SplitConfig(train=tuple(train_range),
                                test=tuple(self.test_timesteps) if self.test_timesteps else None)
        split_cfg.validate(graph.timesteps)

        if self.standardize:
            self.feature_mean_, self.feature_std_ = feature_stats(
                graph, split_cfg.train_timesteps())
            graph = standardize(graph, self.feature_mean_, self.feature_std_)
        else:
            self.feature_mean_ = self.feature_std_ = None

        config = ModelConfig(feature_dim=graph.feature_dim, hidden_dim=self.hidden_dim,
                             layers=self.layers, context_size=self.k,
                             dropout=self.dropout, residual=self.residual)
        self.net_ = GraphTransformerGRU(config, seed=self.seed,
                                        ablation_no_gru=self.ablation_no_gru)
        cfg = self._train_config()
        rng = np.random.default_rng(self.seed)
        batches = precompute_batches(graph, self.k, alpha=self.alpha)
        if cfg.pretrain_epochs:
            train_view = graph.view(split_cfg.train_timesteps())
            pretrain(self.net_, train_view, cfg, batches=batches, rng=rng)
        self.run_log_ = finetune(self.net_, graph, split_cfg, cfg,
                                 batches=batches, alpha=self.alpha, rng=rng)
        self.split_ = split_cfg
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("fit must be called before this method")

    def _prepare(self, X, timesteps):
        graph = check_temporal_graph(X)
        if self.feature_mean_ is not None:
            graph = standardize(graph, self.feature_mean_, self.feature_std_)
        wanted = list(timesteps) if timesteps is not None else graph.timesteps
        missing = [t for t in wanted if t not in graph.snapshots]
        if missing:
            raise ContractError(f"graph has no timesteps {missing}")
        return graph, wanted

    def predict_proba(self, X, timesteps=None) -> np.ndarray:
        """Per-node (licit, illicit) probabilities, snapshots in timestep order."""
        self._check_fitted()
        graph, wanted = self._prepare(X, timesteps)
        probs = predict_view(self.net_, graph, alpha=self.alpha)
        return np.concatenate([probs[ts] for ts in wanted], axis=0)

    def predict(self, X, timesteps=None) -> np.ndarray:
        return self.predict_proba(X, timesteps).argmax(axis=1)

    def score(self, X, y=None, timesteps=None) -> float:
        """Illicit-class F1 over the labelled nodes of the requested timesteps."""
        self._check_fitted()
        graph, wanted = self._prepare(X, timesteps)
        probs = predict_view(self.net_, graph, alpha=self.alpha)
        y_true, y_pred = [], []
        for ts in wanted:
            snap = graph.snapshots[ts]
            idx = snap.labeled_indices()
            y_true.append(snap.labels[idx])
            y_pred.append(probs[ts][idx].argmax(axis=1))
        illicit_f1, _ = classification_metrics(np.concatenate(y_true),
                                               np.concatenate(y_pred))
        return illicit_f1

    def evaluate(self, X, timesteps=None, **kwargs):
        """Full metrics report (per-timestep and windowed) for a view."""
        self._check_fitted()
        graph, wanted = self._prepare(X, timesteps)
        return evaluate(self.net_, graph.view(wanted), alpha=self.alpha,
                        class_weights=tuple(self.class_weights), **kwargs)
