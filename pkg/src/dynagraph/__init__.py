"""Dynamic transaction-graph fraud detection.

Directed per-timestep transaction snapshots are partitioned into fixed-size
intimacy-ranked subgraphs, encoded by a graph transformer, threaded through
a GRU across timesteps and classified licit/illicit — on a self-contained
reverse-mode autodiff core — together with the statistical tooling used to
study behaviour shifts around the dark-market shutdown.
"""

from .batching import (IntimacyMatrix, SubgraphBatch, build_subgraphs, intimacy,
                       intimacy_rows, normalize_adjacency, subgraph_batches)
from .data import (GraphSnapshot, Label, SplitConfig, TemporalGraph,
                   generate_synthetic, load_cache, load_elliptic, save_cache,
                   split, standardize, feature_stats)
from .errors import (ContractError, DynagraphError, ParseError, ShapeError,
                     ValidationError)
from .estimators import SubgraphBatcher, TemporalGraphClassifier
from .model import (GraphTransformerGRU, ModelConfig, cross_entropy, fusion,
                    pool_timestep, reconstruction_loss)
from .optim import Adam, xavier_uniform
from .stats import (Chi2Ranking, FeatureSummary, KSResult, ShutdownReport, acf,
                    chi2_rank, chi2_statistic, feature_summary, ks_two_sample,
                    pca_top2, shutdown_analysis, timestep_mean_pca_clusters)
from .tensor import Tensor, backward, no_grad
from .training import (MetricsReport, RunLog, TrainConfig, evaluate, finetune,
                       load_checkpoint, precompute_batches, pretrain,
                       reconstruction_error, rollout_hidden, save_checkpoint)

__version__ = "0.1.0"
