"""Pre-training and fine-tuning loops over the temporal graph.

Fine-tuning walks timesteps chronologically: all subgraphs of a timestep are
encoded, their representations average-pooled into the GRU update, and a
class-weighted cross-entropy over the labelled nodes is optimised. The GRU
hidden state crosses timestep boundaries as a value; under the default
"detached" mode gradients are cut at each boundary and one optimizer step
runs per timestep, while "full" mode keeps the whole chain differentiable
and steps once per epoch. Evaluation re-rolls the hidden state from zero
through the train timesteps and lets the test timesteps continue that chain.
"""

from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .batching import DEFAULT_ALPHA, subgraph_batches
from .data import Label, SplitConfig, TemporalGraph, split
from .errors import ContractError, ParseError, ValidationError
from .model import (GraphTransformerGRU, ModelConfig, cross_entropy,
                    pool_timestep, reconstruction_loss)
from .optim import Adam
from .tensor import Tensor, add, backward, concat_rows, mul, no_grad

DEFAULT_WINDOWS = ((35, 37), (38, 40), (41, 43), (44, 46), (47, 49))
DEFAULT_BOUNDARY = 43  # first timestep after the market shutdown

_CKPT_MAGIC = b"DGCK"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    seed: int = 0
    class_weights: tuple[float, float] = (0.3, 0.7)  # (licit, illicit)
    pretrain_epochs: int = 50
    bptt_mode: str = "detached"            # "detached" | "full"
    ablation_no_gru: bool = False
    eval_every: int = 20

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if min(self.class_weights) <= 0:
            raise ContractError(f"class weights must be positive, got {self.class_weights}")
        if self.bptt_mode not in ("detached", "full"):
            raise ContractError(f"bptt_mode must be 'detached' or 'full', got {self.bptt_mode!r}")
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")


@dataclass(frozen=True)
class RunLogRow:
    epoch: int
    split: str
    loss: float
    illicit_f1: float
    micro_f1: float
    timestep: int | None = None


@dataclass
class RunLog:
    seed: int
    rows: list[RunLogRow] = field(default_factory=list)
    wall_time: float = 0.0

    def to_csv(self) -> str:
        out = ["epoch,split,timestep,loss,illicit_f1,micro_f1"]
        for r in self.rows:
            ts = "" if r.timestep is None else str(r.timestep)
            out.append(f"{r.epoch},{r.split},{ts},{r.loss!r},{r.illicit_f1!r},{r.micro_f1!r}")
        return "\n".join(out) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


@dataclass(frozen=True)
class TimestepMetrics:
    timestep: int
    n_labeled: int
    loss: float
    illicit_f1: float
    micro_f1: float


@dataclass(frozen=True)
class WindowMetrics:
    label: str
    illicit_f1_mean: float
    illicit_f1_std: float
    micro_f1_mean: float
    micro_f1_std: float


@dataclass
class MetricsReport:
    per_timestep: list[TimestepMetrics]
    windows: list[WindowMetrics]
    illicit_f1: float          # pooled over all labelled nodes in the view
    micro_f1: float
    loss: float

    def to_csv(self) -> str:
        out = ["timestep,n_labeled,loss,illicit_f1,micro_f1"]
        for m in self.per_timestep:
            out.append(f"{m.timestep},{m.n_labeled},{m.loss!r},{m.illicit_f1!r},{m.micro_f1!r}")
        out.append("")
        out.append("window,illicit_f1_mean,illicit_f1_std,micro_f1_mean,micro_f1_std")
        for w in self.windows:
            out.append(f"{w.label},{w.illicit_f1_mean!r},{w.illicit_f1_std!r},"
                       f"{w.micro_f1_mean!r},{w.micro_f1_std!r}")
        return "\n".join(out) + "\n"


# --- metrics ------------------------------------------------------------------


def f1_binary(tp: int, fp: int, fn: int) -> float:
    """F1 with the degenerate all-empty case defined as 0."""
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def classification_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    """(illicit F1, micro F1) treating the illicit class as positive.

    Micro F1 pools predictions across both classes, which for single-label
    problems equals accuracy.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(((y_pred == Label.ILLICIT) & (y_true == Label.ILLICIT)).sum())
    fp = int(((y_pred == Label.ILLICIT) & (y_true == Label.LICIT)).sum())
    fn = int(((y_pred == Label.LICIT) & (y_true == Label.ILLICIT)).sum())
    illicit_f1 = f1_binary(tp, fp, fn)
    micro_f1 = float((y_pred == y_true).mean()) if len(y_true) else 0.0
    return illicit_f1, micro_f1


def _window_rows(per_ts: list[TimestepMetrics], windows, boundary: int) -> list[WindowMetrics]:
    def aggregate(label, members):
        if not members:
            return None
        ill = np.array([m.illicit_f1 for m in members])
        mic = np.array([m.micro_f1 for m in members])
        std = (lambda v: float(v.std(ddof=1)) if len(v) > 1 else 0.0)
        return WindowMetrics(label, float(ill.mean()), std(ill), float(mic.mean()), std(mic))

    rows = []
    for lo, hi in windows:
        row = aggregate(f"{lo}-{hi}", [m for m in per_ts if lo <= m.timestep <= hi])
        if row:
            rows.append(row)
    # the boundary timestep's side is genuinely ambiguous, so report both groupings
    for label, pred in ((f"pre<{boundary}", lambda t: t < boundary),
                        (f"post>={boundary}", lambda t: t >= boundary),
                        (f"pre<={boundary}", lambda t: t <= boundary),
                        (f"post>{boundary}", lambda t: t > boundary)):
        row = aggregate(label, [m for m in per_ts if pred(m.timestep)])
        if row:
            rows.append(row)
    return rows


# --- batching glue ------------------------------------------------------------


def precompute_batches(graph: TemporalGraph, k: int, alpha: float = DEFAULT_ALPHA,
                       rank_axis: str = "row", method: str = "auto") -> dict[int, list]:
    return {ts: subgraph_batches(graph.snapshots[ts], k, alpha=alpha,
                                 rank_axis=rank_axis, method=method)
            for ts in graph.timesteps}


def _require_batches(graph, batches, k, alpha):
    if batches is None:
        return precompute_batches(graph, k, alpha)
    missing = [t for t in graph.timesteps if t not in batches]
    if missing:
        raise ContractError(f"precomputed batches missing timesteps {missing}")
    return batches


# --- forward passes -----------------------------------------------------------


def _timestep_pass(net: GraphTransformerGRU, batch_list, hidden, training, rng):
    zs = [net.encode(b, training=training, rng=rng)[1] for b in batch_list]
    pooled = pool_timestep(zs)
    new_hidden = hidden if net.ablation_no_gru else net.gru_step(pooled, hidden)
    return zs, new_hidden


def _head_hidden(net, hidden_before, hidden_after):
    return hidden_after if net.config.gru_classify_state == "post" else hidden_before


def reconstruction_error(net: GraphTransformerGRU, view: TemporalGraph,
                         batches=None, alpha: float = DEFAULT_ALPHA) -> float:
    """Mean feature-reconstruction distance over every node of a view."""
    batches = _require_batches(view, batches, net.config.context_size, alpha)
    total_dist = 0.0
    count = 0
    with no_grad():
        for ts in view.timesteps:
            for batch in batches[ts]:
                _, z = net.encode(batch)
                x_hat = net.reconstruct(z)
                target = batch.features[0:1, :]
                total_dist += float(np.linalg.norm(x_hat.data - target))
                count += 1
    if count == 0:
        raise ContractError("reconstruction_error: empty view")
    return total_dist / count


def evaluate(net: GraphTransformerGRU, view: TemporalGraph, hs_seed=None,
             batches=None, alpha: float = DEFAULT_ALPHA, windows=DEFAULT_WINDOWS,
             boundary: int = DEFAULT_BOUNDARY,
             class_weights: tuple[float, float] = (0.3, 0.7)) -> MetricsReport:
    """Per-timestep and windowed classification metrics over labelled nodes.

    ``hs_seed`` is the GRU hidden state carried in from earlier timesteps
    (zeros when absent); the chain continues across the view's timesteps.
    """
    report, _ = _evaluate_with_hidden(net, view, hs_seed, batches, alpha, windows,
                                      boundary, class_weights)
    return report


def _evaluate_with_hidden(net, view, hs_seed, batches, alpha, windows, boundary,
                          class_weights) -> tuple[MetricsReport, np.ndarray]:
    """evaluate() plus the final hidden state, so a caller scoring the train
    window can seed the test window without re-rolling the chain."""
    batches = _require_batches(view, batches, net.config.context_size, alpha)
    weights = np.asarray(class_weights, dtype=np.float64)
    per_ts: list[TimestepMetrics] = []
    pooled_true: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    loss_sum = 0.0
    weight_sum = 0.0
    with no_grad():
        hidden = net.zero_hidden() if hs_seed is None else Tensor(np.atleast_2d(hs_seed))
        for ts in view.timesteps:
            snap = view.snapshots[ts]
            zs, new_hidden = _timestep_pass(net, batches[ts], hidden, False, None)
            head = _head_hidden(net, hidden, new_hidden)
            labeled = snap.labeled_indices()
            if len(labeled):
                logits = net.classify_logits(concat_rows([zs[i] for i in labeled]), head)
                y_true = snap.labels[labeled].astype(np.int64)
                y_pred = logits.data.argmax(axis=1)
                loss = cross_entropy(logits, y_true, weights).item()
                w = float(weights[y_true].sum())
                loss_sum += loss * w
                weight_sum += w
                ill, mic = classification_metrics(y_true, y_pred)
                per_ts.append(TimestepMetrics(ts, len(labeled), loss, ill, mic))
                pooled_true.append(y_true)
                pooled_pred.append(y_pred)
            else:
                per_ts.append(TimestepMetrics(ts, 0, 0.0, 0.0, 0.0))
            hidden = new_hidden
    if pooled_true:
        ill, mic = classification_metrics(np.concatenate(pooled_true),
                                          np.concatenate(pooled_pred))
    else:
        ill, mic = 0.0, 0.0
    loss = loss_sum / weight_sum if weight_sum else 0.0
    report = MetricsReport(per_ts, _window_rows(per_ts, windows, boundary),
                           ill, mic, loss)
    return report, hidden.data.copy()


def rollout_hidden(net: GraphTransformerGRU, view: TemporalGraph, batches=None,
                   alpha: float = DEFAULT_ALPHA, hs_seed=None) -> np.ndarray:
    """Final GRU hidden state after rolling (without training) through a view."""
    batches = _require_batches(view, batches, net.config.context_size, alpha)
    with no_grad():
        hidden = net.zero_hidden() if hs_seed is None else Tensor(np.atleast_2d(hs_seed))
        for ts in view.timesteps:
            _, hidden = _timestep_pass(net, batches[ts], hidden, False, None)
    return hidden.data.copy()


def predict_view(net: GraphTransformerGRU, view: TemporalGraph, batches=None,
                 alpha: float = DEFAULT_ALPHA, hs_seed=None) -> dict[int, np.ndarray]:
    """Class probabilities for every node, keyed by timestep."""
    batches = _require_batches(view, batches, net.config.context_size, alpha)
    out: dict[int, np.ndarray] = {}
    with no_grad():
        hidden = net.zero_hidden() if hs_seed is None else Tensor(np.atleast_2d(hs_seed))
        for ts in view.timesteps:
            zs, new_hidden = _timestep_pass(net, batches[ts], hidden, False, None)
            head = _head_hidden(net, hidden, new_hidden)
            probs = net.classify(concat_rows(zs), head)
            out[ts] = probs.data.copy()
            hidden = new_hidden
    return out


# --- training loops -----------------------------------------------------------


def pretrain(net: GraphTransformerGRU, train_view: TemporalGraph, cfg: TrainConfig,
             batches=None, alpha: float = DEFAULT_ALPHA, rng=None) -> list[float]:
    """Minimise the feature-reconstruction loss over every train-view node.

    Labels are irrelevant here, so labelled and unlabelled nodes all
    contribute. Only the embedding, encoder layers and reconstruction head
    are updated. Returns the per-epoch mean losses.
    """
    if not train_view.snapshots:
        raise ContractError("pretrain: empty train view")
    batches = _require_batches(train_view, batches, net.config.context_size, alpha)
    optimizer = Adam(net.encoder_parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    losses = []
    for _ in range(cfg.pretrain_epochs):
        epoch_losses = []
        for ts in train_view.timesteps:
            batch_list = batches[ts]
            x_hats = []
            for batch in batch_list:
                _, z = net.encode(batch, training=True, rng=rng)
                x_hats.append(net.reconstruct(z))
            targets = Tensor(np.stack([b.features[0] for b in batch_list]))
            loss = reconstruction_loss(targets, concat_rows(x_hats))
            backward(loss)
            optimizer.step()
            epoch_losses.append(loss.item())
        losses.append(float(np.mean(epoch_losses)))
    return losses


def _finetune_parameters(net: GraphTransformerGRU) -> dict[str, Tensor]:
    """Everything trainable except the reconstruction head; the GRU cell is
    also left out under ablation because it never receives gradients."""
    params = {k: v for k, v in net.parameters().items() if not k.startswith("recon.")}
    if net.ablation_no_gru:
        params = {k: v for k, v in params.items() if not k.startswith("gru.")}
    return params


def make_optimizer(net: GraphTransformerGRU, cfg: TrainConfig) -> Adam:
    return Adam(_finetune_parameters(net), lr=cfg.lr)


def finetune(net: GraphTransformerGRU, graph: TemporalGraph, split_cfg: SplitConfig,
             cfg: TrainConfig, batches=None, alpha: float = DEFAULT_ALPHA,
             windows=DEFAULT_WINDOWS, boundary: int = DEFAULT_BOUNDARY,
             optimizer: Adam | None = None, rng=None, start_epoch: int = 0,
             log: RunLog | None = None) -> RunLog:
    """Classification fine-tuning; returns the run log.

    ``optimizer``/``rng``/``start_epoch``/``log`` exist so a checkpointed run
    can continue exactly where it stopped.
    """
    if net.ablation_no_gru != cfg.ablation_no_gru:
        raise ContractError("network and config disagree about the ablation mode")
    if cfg.bptt_mode == "detached" and net.config.gru_classify_state == "pre":
        raise ContractError("gru_classify_state='pre' needs bptt_mode='full'; "
                            "detached boundaries would cut every gradient to the GRU")
    train_view, test_view = split(graph, split_cfg)
    needed = train_view.timesteps + (test_view.timesteps if test_view else [])
    batches = _require_batches(graph.view(needed), batches, net.config.context_size, alpha)
    if not any(len(train_view.snapshots[t].labeled_indices()) for t in train_view.timesteps):
        raise ContractError("finetune: train view has no labelled nodes")

    weights = np.asarray(cfg.class_weights, dtype=np.float64)
    optimizer = make_optimizer(net, cfg) if optimizer is None else optimizer
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    log = RunLog(seed=cfg.seed) if log is None else log

    started = time.perf_counter()
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        hidden = net.zero_hidden()
        loss_terms: list[tuple] = []
        for ts in train_view.timesteps:
            snap = train_view.snapshots[ts]
            zs, new_hidden = _timestep_pass(net, batches[ts], hidden, True, rng)
            head = _head_hidden(net, hidden, new_hidden)
            labeled = snap.labeled_indices()
            if len(labeled):
                logits = net.classify_logits(concat_rows([zs[i] for i in labeled]), head)
                y_true = snap.labels[labeled].astype(np.int64)
                loss = cross_entropy(logits, y_true, weights)
                w = float(weights[y_true].sum())
                if cfg.bptt_mode == "detached":
                    backward(loss)
                    optimizer.step()
                    loss_terms.append((loss.item(), w))
                else:
                    loss_terms.append((loss, w))
            hidden = new_hidden.detach() if cfg.bptt_mode == "detached" else new_hidden
        if cfg.bptt_mode == "full" and loss_terms:
            total_w = sum(w for _, w in loss_terms)
            combined = None
            for loss, w in loss_terms:
                term = mul(loss, w / total_w)
                combined = term if combined is None else add(combined, term)
            backward(combined)
            optimizer.step()

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            train_metrics, hs_end = _evaluate_with_hidden(
                net, train_view, None, batches, alpha, windows, boundary,
                cfg.class_weights)
            log.rows.append(RunLogRow(epoch, "train", train_metrics.loss,
                                      train_metrics.illicit_f1, train_metrics.micro_f1))
            if test_view is not None:
                # the test chain continues from the last train timestep
                test_metrics = evaluate(net, test_view, hs_seed=hs_end, batches=batches,
                                        windows=windows, boundary=boundary,
                                        class_weights=cfg.class_weights)
                log.rows.append(RunLogRow(epoch, "test", test_metrics.loss,
                                          test_metrics.illicit_f1, test_metrics.micro_f1))
    log.wall_time += time.perf_counter() - started
    return log


# --- checkpointing ------------------------------------------------------------


def save_checkpoint(path, net: GraphTransformerGRU, optimizer: Adam | None = None,
                    rng: np.random.Generator | None = None, epoch: int = 0,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Named-array manifest plus contiguous payload, with enough run state
    (optimizer moments, RNG state, epoch) to resume training exactly.

    ``extra_arrays`` (e.g. feature standardisation statistics) are stored
    under an ``extra.`` prefix and surface again on load.
    """
    arrays: dict[str, np.ndarray] = {name: t.data for name, t in net.params.items()}
    for name, value in (extra_arrays or {}).items():
        arrays[f"extra.{name}"] = np.asarray(value, dtype=np.float64)
    meta = {
        "config": net.config.to_dict(),
        "seed": net.seed,
        "ablation_no_gru": net.ablation_no_gru,
        "epoch": int(epoch),
    }
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
        meta["adam"] = {"t": optimizer.t, "lr": optimizer.lr,
                        "params": sorted(optimizer.params)}
    if rng is not None:
        meta["rng_state"] = json.loads(json.dumps(rng.bit_generator.state, default=int))

    manifest = []
    payload = io.BytesIO()
    for name in sorted(arrays):
        arr = np.array(arrays[name], dtype="<f8", order="C")  # keeps 0-d shapes
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": payload.tell()})
        payload.write(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload.getvalue())


@dataclass
class Checkpoint:
    net: GraphTransformerGRU
    epoch: int
    adam_meta: dict | None
    adam_arrays: dict[str, np.ndarray]
    rng_state: dict | None
    manifest: list[dict]
    extra_arrays: dict[str, np.ndarray]


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<Q", raw, 4)
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt checkpoint header ({exc})") from exc
    meta = header["meta"]
    base = 12 + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count,
                            offset=base + entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()

    config = ModelConfig(**meta["config"])
    net = GraphTransformerGRU(config, seed=meta["seed"],
                              ablation_no_gru=meta["ablation_no_gru"])
    expected = {name: tuple(t.data.shape) for name, t in net.params.items()}
    stored = {e["name"]: tuple(e["shape"]) for e in header["arrays"]
              if not e["name"].startswith(("adam.", "extra."))}
    if expected != stored:
        diff = sorted(set(expected.items()) ^ set(stored.items()))
        raise ValidationError(f"{path}: parameter manifest mismatch: {diff}")
    for name, t in net.params.items():
        t.data = arrays[name].reshape(t.data.shape)
    adam_arrays = {k: v for k, v in arrays.items() if k.startswith("adam.")}
    extra = {k[len("extra."):]: v for k, v in arrays.items() if k.startswith("extra.")}
    return Checkpoint(net=net, epoch=int(meta.get("epoch", 0)),
                      adam_meta=meta.get("adam"), adam_arrays=adam_arrays,
                      rng_state=meta.get("rng_state"), manifest=header["arrays"],
                      extra_arrays=extra)


def resume_state(ckpt: Checkpoint, cfg: TrainConfig):
    """(optimizer, rng) rebuilt from a checkpoint, ready to hand to finetune."""
    optimizer = make_optimizer(ckpt.net, cfg)
    if ckpt.adam_meta is not None:
        if sorted(optimizer.params) != ckpt.adam_meta["params"]:
            raise ValidationError("checkpoint optimizer covers different parameters "
                                  f"({ckpt.adam_meta['params']} vs {sorted(optimizer.params)})")
        optimizer.lr = ckpt.adam_meta["lr"]
        optimizer.load_state_arrays(ckpt.adam_arrays, ckpt.adam_meta["t"])
    rng = np.random.default_rng(cfg.seed)
    if ckpt.rng_state is not None:
        rng.bit_generator.state = ckpt.rng_state
    return optimizer, rng
