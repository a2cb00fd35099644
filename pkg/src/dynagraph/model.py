"""Subgraph transformer encoder with a GRU over timesteps.

One forward pass per subgraph: raw features are embedded with an affine+relu
layer, refined by D single-head self-attention layers (each adding a learned
projection of the raw features as a graph residual), and fused into one
target representation z by a masked mean over the context rows. Per
timestep, all z vectors are average-pooled into the GRU input; classification
mixes the per-node z with the GRU hidden state through trainable scalar
weights before a final affine+softmax head. A separate affine head
reconstructs raw features from z for pre-training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .batching import SubgraphBatch
from .errors import ContractError, ShapeError
from .optim import xavier_uniform
from .tensor import (Tensor, add, concat_rows, l2norm_rows, log_softmax_rows,
                     matmul, mean_rows, mul, relu, sigmoid, softmax_rows, tanh,
                     total, transpose)

# finite stand-in for -inf attention logits; drowns any real logit exactly
# (adding it to values below ~1e13 returns itself bit-for-bit)
MASKED_LOGIT = -1e30


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int                 # d_x, width of raw node features
    hidden_dim: int = 32             # d_h, width of every internal state
    layers: int = 2                  # encoder depth D
    context_size: int = 11           # k context nodes per subgraph
    num_classes: int = 2
    dropout: float = 0.1
    residual: str = "raw"            # "raw" adds X @ R per layer; "none" skips it
    gru_classify_state: str = "post"  # hidden state used by the head: post/pre update

    def __post_init__(self):
        if self.hidden_dim < 1 or self.layers < 1:
            raise ContractError("hidden_dim and layers must be >= 1")
        if self.num_classes != 2:
            raise ContractError("this task is binary: num_classes must be 2")
        if self.residual not in ("raw", "none"):
            raise ContractError(f"residual must be 'raw' or 'none', got {self.residual!r}")
        if self.gru_classify_state not in ("post", "pre"):
            raise ContractError("gru_classify_state must be 'post' or 'pre'")

    def to_dict(self) -> dict:
        return asdict(self)


class GraphTransformerGRU:
    """All trainable state plus the forward rules that use it.

    With ``ablation_no_gru`` the mixing scalars are frozen at (1, 0) and the
    recurrent update is skipped, removing temporal information from the head
    while keeping every other computation bit-identical.
    """

    def __init__(self, config: ModelConfig, seed: int = 0,
                 ablation_no_gru: bool = False):
        self.config = config
        self.seed = seed
        self.ablation_no_gru = ablation_no_gru
        rng = np.random.default_rng(seed)
        d_x, d_h = config.feature_dim, config.hidden_dim

        def weight(fan_in, fan_out):
            return Tensor(xavier_uniform(rng, fan_in, fan_out), requires_grad=True)

        def bias(width):
            return Tensor(np.zeros(width), requires_grad=True)

        self.params: dict[str, Tensor] = {}
        p = self.params
        p["embed.W"] = weight(d_x, d_h)
        p["embed.b"] = bias(d_h)
        for layer in range(config.layers):
            p[f"enc{layer}.Wq"] = weight(d_h, d_h)
            p[f"enc{layer}.Wk"] = weight(d_h, d_h)
            p[f"enc{layer}.Wv"] = weight(d_h, d_h)
            if config.residual == "raw":
                p[f"enc{layer}.R"] = weight(d_x, d_h)
        p["recon.W"] = weight(d_h, d_x)
        p["recon.b"] = bias(d_x)
        p["cls.W"] = weight(d_h, config.num_classes)
        p["cls.b"] = bias(config.num_classes)
        for gate in ("r", "u", "c"):
            p[f"gru.W{gate}"] = weight(d_h, d_h)
            p[f"gru.U{gate}"] = weight(d_h, d_h)
            p[f"gru.b{gate}"] = bias(d_h)
        if ablation_no_gru:
            p["mix.w_enc"] = Tensor(1.0)
            p["mix.w_gru"] = Tensor(0.0)
        else:
            p["mix.w_enc"] = Tensor(0.5, requires_grad=True)
            p["mix.w_gru"] = Tensor(0.5, requires_grad=True)

    # --- parameter groups ---

    def parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def encoder_parameters(self) -> dict[str, Tensor]:
        """Embedding, attention layers and reconstruction head (pre-training)."""
        return {k: v for k, v in self.params.items()
                if k.split(".")[0].startswith(("embed", "enc", "recon"))}

    def zero_hidden(self) -> Tensor:
        return Tensor(np.zeros((1, self.config.hidden_dim)))

    # --- forward pieces ---

    def embed(self, batch: SubgraphBatch) -> Tensor:
        if batch.features.shape[1] != self.config.feature_dim:
            raise ContractError(
                f"batch feature width {batch.features.shape[1]} != configured "
                f"{self.config.feature_dim}")
        X = Tensor(batch.features)
        return relu(add(matmul(X, self.params["embed.W"]), self.params["embed.b"]))

    def encoder_layer(self, H: Tensor, X: Tensor, mask: np.ndarray, layer: int) -> Tensor:
        p = self.params
        Q = matmul(H, p[f"enc{layer}.Wq"])
        K = matmul(H, p[f"enc{layer}.Wk"])
        V = matmul(H, p[f"enc{layer}.Wv"])
        logits = mul(matmul(Q, transpose(K)), 1.0 / math.sqrt(self.config.hidden_dim))
        if not mask.all():
            # padded columns never receive attention weight
            logits = add(logits, Tensor(np.where(mask, 0.0, MASKED_LOGIT)[None, :]))
        attended = matmul(softmax_rows(logits), V)
        if self.config.residual == "raw":
            return add(attended, matmul(X, p[f"enc{layer}.R"]))
        return attended

    def encode(self, batch: SubgraphBatch, training: bool = False,
               rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Final context states H and the fused target representation z."""
        if batch.size != self.config.context_size + 1:
            raise ContractError(
                f"batch has {batch.size} rows, expected k+1 = {self.config.context_size + 1}")
        X = Tensor(batch.features)
        H = self.embed(batch)
        H = _dropout(H, self.config.dropout, training, rng)
        for layer in range(self.config.layers):
            H = self.encoder_layer(H, X, batch.mask, layer)
            H = _dropout(H, self.config.dropout, training, rng)
        return H, fusion(H, batch.mask)

    def reconstruct(self, z: Tensor) -> Tensor:
        """Raw-feature estimate from a fused representation (no activation:
        targets are real-valued)."""
        return add(matmul(z, self.params["recon.W"]), self.params["recon.b"])

    def gru_step(self, pooled: Tensor, hidden: Tensor) -> Tensor:
        p = self.params
        r = sigmoid(add(add(matmul(pooled, p["gru.Wr"]), matmul(hidden, p["gru.Ur"])),
                        p["gru.br"]))
        u = sigmoid(add(add(matmul(pooled, p["gru.Wu"]), matmul(hidden, p["gru.Uu"])),
                        p["gru.bu"]))
        c = tanh(add(add(matmul(pooled, p["gru.Wc"]), matmul(mul(r, hidden), p["gru.Uc"])),
                     p["gru.bc"]))
        return add(mul(sub_from_one(u), hidden), mul(u, c))

    def classify_logits(self, z_rows: Tensor, hidden: Tensor) -> Tensor:
        """Mix each z row with the timestep hidden state, then the affine head."""
        mixed = add(mul(self.params["mix.w_enc"], z_rows),
                    mul(self.params["mix.w_gru"], hidden))
        return add(matmul(mixed, self.params["cls.W"]), self.params["cls.b"])

    def classify(self, z: Tensor, hidden: Tensor) -> Tensor:
        """Class probabilities for one node; rows sum to one."""
        return softmax_rows(self.classify_logits(z, hidden))


def sub_from_one(x: Tensor) -> Tensor:
    return add(mul(x, -1.0), 1.0)


def _dropout(x: Tensor, p: float, training: bool,
             rng: np.random.Generator | None) -> Tensor:
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode forward needs an explicit rng for dropout")
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))


def fusion(H: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the unmasked rows of H, as a 1-row matrix."""
    real = int(mask.sum())
    if real == 0:
        raise ContractError("fusion: every row is masked")
    weights = np.where(mask, 1.0 / real, 0.0)[None, :]
    return matmul(Tensor(weights), H)


def pool_timestep(zs: list[Tensor]) -> Tensor:
    """Elementwise mean of all subgraph representations in a timestep."""
    if not zs:
        raise ContractError("pool_timestep: empty timestep")
    if len(zs) == 1:
        return zs[0]
    return mean_rows(concat_rows(zs))


def reconstruction_loss(targets: Tensor, reconstructions: Tensor,
                        eps: float = 1e-12) -> Tensor:
    """Mean Euclidean (not squared) distance between feature rows and their
    reconstructions."""
    if targets.shape != reconstructions.shape or targets.data.ndim != 2:
        raise ShapeError(f"reconstruction_loss: shapes {targets.shape} vs "
                         f"{reconstructions.shape}")
    if targets.shape[0] == 0:
        raise ContractError("reconstruction_loss: no samples")
    norms = l2norm_rows(add(reconstructions, mul(targets, -1.0)), eps=eps)
    return mul(total(norms), 1.0 / targets.shape[0])


def cross_entropy(logits: Tensor, labels: np.ndarray,
                  class_weights: np.ndarray) -> Tensor:
    """Class-weighted cross-entropy; the weighted mean over samples."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != len(labels):
        raise ShapeError(f"cross_entropy: {logits.shape[0]} logit rows vs "
                         f"{len(labels)} labels")
    if len(labels) == 0:
        raise ContractError("cross_entropy: no labelled samples")
    weights = np.asarray(class_weights, dtype=np.float64)
    picked = np.zeros(logits.shape)
    picked[np.arange(len(labels)), labels] = weights[labels]
    log_probs = log_softmax_rows(logits)
    weighted_nll = mul(total(mul(log_probs, Tensor(picked))), -1.0)
    return mul(weighted_nll, 1.0 / weights[labels].sum())
