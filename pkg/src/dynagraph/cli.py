"""Command-line pipeline driver.

Subcommands: ``preprocess`` (validate + cache a dataset), ``train``
(pre-train and fine-tune over one or more seeds), ``sweep-k`` (context-size
sweep), ``evaluate`` (score a checkpoint on the test window) and ``analyze``
(shutdown event study, PCA clustering, autocorrelation).

Configuration is a flat JSON file with dotted keys (``model.hidden_dim``,
``train.lr``); command-line flags override file values, which override the
built-in defaults. Every subcommand writes its fully-resolved configuration
next to its outputs, and re-running from that file reproduces the outputs.

Exit codes: 0 success, 2 user/config/data error, 3 internal error.
"""

from __future__ import annotations

import concurrent.futures
import datetime as _dt
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .batching import load_batch_cache, rehydrate_batches, save_batch_cache
from .data import (SplitConfig, TemporalGraph, feature_stats, generate_synthetic,
                   graph_fingerprint, load_cache, load_elliptic, save_cache,
                   standardize)
from .errors import ContractError, DynagraphError, ParseError
from .model import GraphTransformerGRU, ModelConfig
from .stats import acf, shutdown_analysis, timestep_mean_pca_clusters
from .training import (TrainConfig, evaluate, finetune, load_checkpoint,
                       make_optimizer, precompute_batches, pretrain,
                       rollout_hidden, save_checkpoint)

DEFAULTS = {
    "data.dir": None,
    "data.cache": None,
    "data.synthetic": False,
    "data.synthetic_timesteps": 8,
    "data.synthetic_nodes": 30,
    "data.synthetic_illicit_frac": 0.3,
    "data.synthetic_label_frac": 0.6,
    "data.synthetic_feature_dim": 16,
    "data.synthetic_seed": 0,
    "data.standardize": True,
    "split.train": "auto",
    "split.test": "auto",
    "model.hidden_dim": 32,
    "model.layers": 2,
    "model.k": 11,
    "model.dropout": 0.1,
    "model.residual": "raw",
    "batch.alpha": 0.15,
    "batch.rank_axis": "row",
    "train.epochs": 200,
    "train.lr": 1e-3,
    "train.pretrain_epochs": 50,
    "train.eval_every": 20,
    "train.class_weight_licit": 0.3,
    "train.class_weight_illicit": 0.7,
    "train.bptt_mode": "detached",
    "train.ablation": False,
    "train.skip_pretrain": False,
    "train.seeds": "10",
    "analysis.boundary": 43,
    "analysis.windows": "35-37,38-40,41-43,44-46,47-49",
    "analysis.bins": 10,
    "analysis.clusters": 4,
    "analysis.max_lag": 20,
}

ELLIPTIC_FILES = ("elliptic_txs_features.csv", "elliptic_txs_classes.csv",
                  "elliptic_txs_edgelist.csv")


def guarded(fn):
    """Map exceptions onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except BrokenPipeError:
            # downstream pager/head closed the pipe; leave quietly
            try:
                sys.stdout.close()
            except OSError:
                pass
            sys.exit(0)
        except (DynagraphError, ValueError, FileNotFoundError, NotADirectoryError,
                PermissionError, json.JSONDecodeError) as exc:
            # ValueError also covers malformed numbers/specs in flags and
            # config values
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:
            click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(3)

    return wrapper


# --- configuration ----------------------------------------------------------


def resolve_config(config_path, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ContractError(f"unknown config keys: {unknown}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def parse_int_list(spec: str, what: str = "value") -> list[int]:
    """'10' -> 0..9 (count), '1,3,7' -> list, '3-15' -> inclusive range."""
    spec = str(spec).strip()
    out: list[int] = []
    if "," in spec or "-" in spec:
        for part in spec.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    else:
        out.extend(range(int(spec)))
    if not out:
        raise ContractError(f"empty {what} list: {spec!r}")
    return out


def parse_windows(spec: str) -> tuple[tuple[int, int], ...]:
    windows = []
    for part in str(spec).split(","):
        lo, hi = part.strip().split("-", 1)
        windows.append((int(lo), int(hi)))
    return tuple(windows)


def _resolve_split(cfg: dict, graph: TemporalGraph) -> SplitConfig:
    timesteps = graph.timesteps
    if cfg["split.train"] == "auto":
        if len(timesteps) < 2:
            train, test = (timesteps[0], timesteps[-1]), None
        else:
            test_len = max(1, round(0.3 * len(timesteps)))
            train = (timesteps[0], timesteps[-1 - test_len])
            test = (timesteps[-test_len], timesteps[-1])
    else:
        lo, hi = cfg["split.train"].split("-", 1)
        train = (int(lo), int(hi))
        if cfg["split.test"] in (None, "auto", "none"):
            rest = [t for t in timesteps if not train[0] <= t <= train[1]]
            test = (rest[0], rest[-1]) if rest else None
        else:
            lo, hi = cfg["split.test"].split("-", 1)
            test = (int(lo), int(hi))
    split_cfg = SplitConfig(train=train, test=test)
    split_cfg.validate(timesteps)
    return split_cfg


def _out_dir(out, command: str) -> Path:
    if out is not None:
        path = Path(out)
    else:
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
        path = Path("runs") / f"{stamp}-{command}"
    for sub in ("checkpoints", "logs", "reports"):
        (path / sub).mkdir(parents=True, exist_ok=True)
    return path


def _write_config(cfg: dict, out_dir: Path) -> None:
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_graph(cfg: dict) -> TemporalGraph:
    if cfg["data.cache"]:
        return load_cache(cfg["data.cache"])
    if cfg["data.synthetic"]:
        return generate_synthetic(
            int(cfg["data.synthetic_timesteps"]),
            int(cfg["data.synthetic_nodes"]),
            float(cfg["data.synthetic_illicit_frac"]),
            seed=int(cfg["data.synthetic_seed"]),
            feature_dim=int(cfg["data.synthetic_feature_dim"]),
            label_frac=float(cfg["data.synthetic_label_frac"]),
        )
    if cfg["data.dir"]:
        root = Path(cfg["data.dir"])
        cache = root / "graph.bin"
        if cache.exists():
            return load_cache(cache)
        paths = [root / name for name in ELLIPTIC_FILES]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise FileNotFoundError(f"missing dataset files: {missing}")
        return load_elliptic(*paths)
    raise ContractError("no data source: pass --data-dir, --synthetic, or set "
                        "data.cache in the config")


def _batch_cache_name(alpha: float, k: int) -> str:
    return f"batches-a{alpha}-k{k}.bin"


def find_cached_batches(cfg: dict, raw_graph: TemporalGraph, k: int, alpha: float):
    """Membership structure from a preprocess batch cache, when one matches.

    The cache is keyed to the raw dataset fingerprint; features are
    re-gathered by the caller so standardisation still applies.
    """
    candidates = []
    if cfg["data.cache"]:
        candidates.append(Path(cfg["data.cache"]).parent / _batch_cache_name(alpha, k))
    if cfg["data.dir"]:
        candidates.append(Path(cfg["data.dir"]) / _batch_cache_name(alpha, k))
    for path in candidates:
        if not path.exists():
            continue
        try:
            return load_batch_cache(path, expect_alpha=alpha, expect_k=k,
                                    expect_key=graph_fingerprint(raw_graph))
        except ParseError:
            continue  # stale or foreign cache: recompute instead
    return None


# --- shared training pipeline -------------------------------------------------


def _class_weights(cfg: dict) -> tuple[float, float]:
    return (float(cfg["train.class_weight_licit"]),
            float(cfg["train.class_weight_illicit"]))


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg["train.epochs"]),
        lr=float(cfg["train.lr"]),
        seed=seed,
        class_weights=_class_weights(cfg),
        pretrain_epochs=0 if cfg["train.skip_pretrain"] else int(cfg["train.pretrain_epochs"]),
        bptt_mode=cfg["train.bptt_mode"],
        ablation_no_gru=bool(cfg["train.ablation"]),
        eval_every=int(cfg["train.eval_every"]),
    )


def train_single_seed(cfg: dict, seed: int, out_dir: str | None = None,
                      k: int | None = None) -> dict:
    """One full pre-train + fine-tune + evaluate run; returns summary rows.

    Module-level and driven purely by the resolved config so parallel-seed
    dispatch can pickle the call.
    """
    graph = build_graph(cfg)
    split_cfg = _resolve_split(cfg, graph)
    k = int(cfg["model.k"]) if k is None else k
    alpha = float(cfg["batch.alpha"])
    windows = parse_windows(cfg["analysis.windows"])
    boundary = int(cfg["analysis.boundary"])
    cached = find_cached_batches(cfg, graph, k, alpha)

    if cfg["data.standardize"]:
        mean, std = feature_stats(graph, split_cfg.train_timesteps())
        graph = standardize(graph, mean, std)
        norm_arrays = {"feature_mean": mean, "feature_std": std}
    else:
        norm_arrays = {}

    config = ModelConfig(feature_dim=graph.feature_dim,
                         hidden_dim=int(cfg["model.hidden_dim"]),
                         layers=int(cfg["model.layers"]),
                         context_size=k,
                         dropout=float(cfg["model.dropout"]),
                         residual=cfg["model.residual"])
    train_cfg = _train_config(cfg, seed)
    net = GraphTransformerGRU(config, seed=seed,
                              ablation_no_gru=train_cfg.ablation_no_gru)
    rng = np.random.default_rng(seed)
    if cached is not None:
        batches = rehydrate_batches(cached, graph.snapshots)
    else:
        batches = precompute_batches(graph, k, alpha=alpha,
                                     rank_axis=cfg["batch.rank_axis"])
    if train_cfg.pretrain_epochs:
        pretrain(net, graph.view(split_cfg.train_timesteps()), train_cfg,
                 batches=batches, rng=rng)
    optimizer = make_optimizer(net, train_cfg)
    log = finetune(net, graph, split_cfg, train_cfg, batches=batches, alpha=alpha,
                   windows=windows, boundary=boundary, optimizer=optimizer, rng=rng)

    train_view = graph.view(split_cfg.train_timesteps())
    result = {"seed": seed, "k": k, "runlog_csv": log.to_csv(), "test": None}
    if split_cfg.test is not None:
        hs_end = rollout_hidden(net, train_view, batches=batches)
        report = evaluate(net, graph.view(split_cfg.test_timesteps()), hs_seed=hs_end,
                          batches=batches, windows=windows, boundary=boundary,
                          class_weights=train_cfg.class_weights)
        result["test"] = {
            "illicit_f1": report.illicit_f1,
            "micro_f1": report.micro_f1,
            "per_timestep": [(m.timestep, m.illicit_f1, m.micro_f1)
                             for m in report.per_timestep],
            "metrics_csv": report.to_csv(),
        }
    if out_dir is not None:
        out = Path(out_dir)
        log.write_csv(out / "logs" / f"runlog-seed{seed}.csv")
        if result["test"] is not None:
            (out / "reports" / f"metrics-seed{seed}.csv").write_text(
                result["test"]["metrics_csv"], encoding="utf-8")
        save_checkpoint(out / "checkpoints" / f"seed{seed}.ckpt", net,
                        optimizer=optimizer, rng=rng, epoch=train_cfg.epochs,
                        extra_arrays=norm_arrays)
    return result


def _run_seeds(cfg: dict, seeds: list[int], out_dir: Path | None,
               parallel: bool, k: int | None = None) -> list[dict]:
    out_str = str(out_dir) if out_dir is not None else None
    if parallel and len(seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor() as pool:
            return list(pool.map(functools.partial(train_single_seed, cfg,
                                                   out_dir=out_str, k=k), seeds))
    return [train_single_seed(cfg, seed, out_dir=out_str, k=k) for seed in seeds]


def _aggregate_windows(results: list[dict], windows, boundary: int) -> list[dict]:
    """Pool per-seed per-timestep F1 values into mean(stddev) rows per window."""
    groupings = [(f"{lo}-{hi}", lambda t, lo=lo, hi=hi: lo <= t <= hi)
                 for lo, hi in windows]
    groupings += [(f"pre<{boundary}", lambda t: t < boundary),
                  (f"post>={boundary}", lambda t: t >= boundary)]
    rows = []
    for label, member in groupings:
        ill, mic = [], []
        for result in results:
            if result["test"] is None:
                continue
            for ts, illicit_f1, micro_f1 in result["test"]["per_timestep"]:
                if member(ts):
                    ill.append(illicit_f1)
                    mic.append(micro_f1)
        if not ill:
            continue
        ill, mic = np.array(ill), np.array(mic)
        std = (lambda v: float(v.std(ddof=1)) if len(v) > 1 else 0.0)
        rows.append({"window": label, "illicit_f1_mean": float(ill.mean()),
                     "illicit_f1_std": std(ill), "micro_f1_mean": float(mic.mean()),
                     "micro_f1_std": std(mic), "n": len(ill)})
    return rows


def _format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f}({std:.4f})"


def _echo_window_table(rows: list[dict], variant: str) -> None:
    click.echo(f"illicit F1 by window [{variant}], mean(stddev) pooled over "
               "seeds and timesteps:")
    click.echo(f"{'window':<14}{'illicit F1':<20}{'micro F1':<20}")
    for row in rows:
        click.echo(f"{row['window']:<14}"
                   f"{_format_mean_std(row['illicit_f1_mean'], row['illicit_f1_std']):<20}"
                   f"{_format_mean_std(row['micro_f1_mean'], row['micro_f1_std']):<20}")


# --- commands ------------------------------------------------------------


@click.group()
def main():
    """Dynamic transaction-graph fraud detection pipeline."""


_common = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="JSON config file with dotted keys."),
    click.option("--data-dir", default=None,
                 help="Directory with the three dataset CSVs (or graph.bin)."),
    click.option("--synthetic", is_flag=True, default=None,
                 help="Use the built-in synthetic generator."),
    click.option("--out", default=None, help="Output directory (default runs/<ts>)."),
]


def common_options(fn):
    for option in reversed(_common):
        fn = option(fn)
    return fn


def _overrides(data_dir, synthetic, **extra):
    out = {"data.dir": data_dir, "data.synthetic": synthetic}
    out.update(extra)
    return out


@main.command()
@common_options
@click.option("--k", "k_spec", default=None, help="Context size for the batch cache.")
@guarded
def preprocess(config_path, data_dir, synthetic, out, k_spec):
    """Validate a dataset and cache the graph plus subgraph batches."""
    cfg = resolve_config(config_path, _overrides(
        data_dir, synthetic, **{"model.k": int(k_spec) if k_spec else None}))
    out_dir = _out_dir(out, "preprocess")
    graph = build_graph(cfg)
    counts = graph.label_counts()
    save_cache(graph, out_dir / "graph.bin")
    k = int(cfg["model.k"])
    alpha = float(cfg["batch.alpha"])
    batches = precompute_batches(graph, k, alpha=alpha,
                                 rank_axis=cfg["batch.rank_axis"])
    save_batch_cache(out_dir / _batch_cache_name(alpha, k), batches, alpha, k,
                     dataset_key=graph_fingerprint(graph))
    _write_config(cfg, out_dir)
    from .data import Label
    click.echo(f"nodes={graph.num_nodes} edges={graph.num_edges} "
               f"timesteps={len(graph.timesteps)} "
               f"illicit={counts[Label.ILLICIT]} licit={counts[Label.LICIT]} "
               f"unknown={counts[Label.UNKNOWN]}")
    click.echo(f"wrote {out_dir / 'graph.bin'}")


@main.command()
@common_options
@click.option("--seeds", "seeds_spec", default=None,
              help="Seed count or comma list (e.g. '10' or '1,2,3').")
@click.option("--ablation", is_flag=True, default=None,
              help="Freeze the mixing weights at (1, 0): no GRU contribution.")
@click.option("--skip-pretrain", is_flag=True, default=None)
@click.option("--parallel-seeds", is_flag=True, default=False)
@guarded
def train(config_path, data_dir, synthetic, out, seeds_spec, ablation,
          skip_pretrain, parallel_seeds):
    """Pre-train and fine-tune over one or more seeds; write logs and tables."""
    cfg = resolve_config(config_path, _overrides(
        data_dir, synthetic,
        **{"train.seeds": seeds_spec, "train.ablation": ablation,
           "train.skip_pretrain": skip_pretrain}))
    out_dir = _out_dir(out, "train")
    _write_config(cfg, out_dir)
    seeds = parse_int_list(cfg["train.seeds"], "seed")
    results = _run_seeds(cfg, seeds, out_dir, parallel_seeds)

    variant = "without GRU" if cfg["train.ablation"] else "with GRU"
    rows = _aggregate_windows(results, parse_windows(cfg["analysis.windows"]),
                              int(cfg["analysis.boundary"]))
    if rows:
        _echo_window_table(rows, variant)
        lines = ["variant,window,illicit_f1_mean,illicit_f1_std,"
                 "micro_f1_mean,micro_f1_std,n"]
        lines += [f"{variant},{r['window']},{r['illicit_f1_mean']!r},"
                  f"{r['illicit_f1_std']!r},{r['micro_f1_mean']!r},"
                  f"{r['micro_f1_std']!r},{r['n']}" for r in rows]
        (out_dir / "reports" / "aggregate.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"trained seeds {seeds}; outputs in {out_dir}")


def _positive_int_list(spec, what):
    values = parse_int_list(spec, what)
    bad = [v for v in values if v < 1]
    if bad:
        raise click.BadParameter(f"{what} values must be >= 1, got {bad}")
    return values


@main.command(name="sweep-k")
@common_options
@click.option("--k", "k_spec", default="3-15",
              help="Context sizes, comma list or range (default 3-15).")
@click.option("--seeds", "seeds_spec", default=None)
@click.option("--parallel-seeds", is_flag=True, default=False)
@guarded
def sweep_k(config_path, data_dir, synthetic, out, k_spec, seeds_spec,
            parallel_seeds):
    """Train/evaluate for each context size and tabulate illicit/micro F1."""
    k_values = _positive_int_list(k_spec, "k")
    cfg = resolve_config(config_path, _overrides(
        data_dir, synthetic, **{"train.seeds": seeds_spec}))
    out_dir = _out_dir(out, "sweep-k")
    _write_config(cfg, out_dir)
    seeds = parse_int_list(cfg["train.seeds"], "seed")

    lines = ["k,illicit_f1_mean,illicit_f1_std,micro_f1_mean,micro_f1_std"]
    click.echo(f"{'k':<6}{'illicit F1':<20}{'micro F1':<20}")
    for k in k_values:
        results = _run_seeds(cfg, seeds, None, parallel_seeds, k=k)
        ill = np.array([r["test"]["illicit_f1"] for r in results if r["test"]])
        mic = np.array([r["test"]["micro_f1"] for r in results if r["test"]])
        if not len(ill):
            raise ContractError("sweep-k needs a test split; set split.test")
        std = (lambda v: float(v.std(ddof=1)) if len(v) > 1 else 0.0)
        lines.append(f"{k},{float(ill.mean())!r},{std(ill)!r},"
                     f"{float(mic.mean())!r},{std(mic)!r}")
        click.echo(f"{k:<6}{_format_mean_std(ill.mean(), std(ill)):<20}"
                   f"{_format_mean_std(mic.mean(), std(mic)):<20}")
    (out_dir / "reports" / "k_sweep.csv").write_text("\n".join(lines) + "\n",
                                                     encoding="utf-8")
    click.echo(f"outputs in {out_dir}")


@main.command(name="evaluate")
@common_options
@click.option("--checkpoint", "checkpoint_path", required=True,
              type=click.Path(exists=True))
@click.option("--windows", "windows_spec", default=None,
              help="Aggregation windows, e.g. '35-37,38-40'.")
@click.option("--boundary", type=int, default=None)
@guarded
def evaluate_cmd(config_path, data_dir, synthetic, out, checkpoint_path,
                 windows_spec, boundary):
    """Load a checkpoint and score the test window, per timestep and windowed."""
    cfg = resolve_config(config_path, _overrides(
        data_dir, synthetic,
        **{"analysis.windows": windows_spec,
           "analysis.boundary": boundary}))
    out_dir = _out_dir(out, "evaluate")
    _write_config(cfg, out_dir)

    ckpt = load_checkpoint(checkpoint_path)
    graph = build_graph(cfg)
    split_cfg = _resolve_split(cfg, graph)
    if "feature_mean" in ckpt.extra_arrays:
        graph = standardize(graph, ckpt.extra_arrays["feature_mean"],
                            ckpt.extra_arrays["feature_std"])
    if graph.feature_dim != ckpt.net.config.feature_dim:
        raise ContractError(
            f"checkpoint expects {ckpt.net.config.feature_dim} features, "
            f"dataset has {graph.feature_dim}")
    alpha = float(cfg["batch.alpha"])
    batches = precompute_batches(graph, ckpt.net.config.context_size, alpha=alpha,
                                 rank_axis=cfg["batch.rank_axis"])
    hs_end = rollout_hidden(ckpt.net, graph.view(split_cfg.train_timesteps()),
                            batches=batches)
    if split_cfg.test is None:
        raise ContractError("evaluate needs a test split; set split.test")
    report = evaluate(ckpt.net, graph.view(split_cfg.test_timesteps()),
                      hs_seed=hs_end, batches=batches,
                      windows=parse_windows(cfg["analysis.windows"]),
                      boundary=int(cfg["analysis.boundary"]),
                      class_weights=_class_weights(cfg))
    (out_dir / "reports" / "metrics.csv").write_text(report.to_csv(),
                                                     encoding="utf-8")
    click.echo(f"test illicit F1 = {report.illicit_f1:.4f}, "
               f"micro F1 = {report.micro_f1:.4f}")
    for w in report.windows:
        click.echo(f"{w.label:<14}"
                   f"{_format_mean_std(w.illicit_f1_mean, w.illicit_f1_std):<20}")
    click.echo(f"outputs in {out_dir}")


@main.command()
@common_options
@click.option("--boundary", type=int, default=None,
              help="First timestep after the shutdown event.")
@guarded
def analyze(config_path, data_dir, synthetic, out, boundary):
    """Shutdown event study, PCA timestep clustering and ACF reports."""
    cfg = resolve_config(config_path, _overrides(
        data_dir, synthetic, **{"analysis.boundary": boundary}))
    out_dir = _out_dir(out, "analyze")
    _write_config(cfg, out_dir)
    graph = build_graph(cfg)
    reports = out_dir / "reports"

    report = shutdown_analysis(graph, boundary=int(cfg["analysis.boundary"]),
                               bins=int(cfg["analysis.bins"]))
    (reports / "shutdown.txt").write_text(report.to_text(), encoding="utf-8")
    (reports / "shutdown_summary.csv").write_text(report.summary_csv(),
                                                  encoding="utf-8")
    (reports / "shutdown_ks.csv").write_text(report.ks_csv(), encoding="utf-8")

    assignments, means, _ = timestep_mean_pca_clusters(
        graph, int(cfg["analysis.clusters"]))
    lines = ["timestep,pc1_mean,pc2_mean,cluster"]
    lines += [f"{ts},{float(means[i, 0])!r},{float(means[i, 1])!r},{assignments[i]}"
              for i, ts in enumerate(graph.timesteps)]
    (reports / "pca_clusters.csv").write_text("\n".join(lines) + "\n",
                                              encoding="utf-8")

    max_lag = min(int(cfg["analysis.max_lag"]), len(graph.timesteps) - 1)
    acf_pc1 = acf(means[:, 0], max_lag)
    acf_pc2 = acf(means[:, 1], max_lag)
    lines = ["lag,pc1_acf,pc2_acf"]
    lines += [f"{h},{float(acf_pc1[h])!r},{float(acf_pc2[h])!r}"
              for h in range(max_lag + 1)]
    (reports / "acf.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    click.echo(report.to_text())
    click.echo(f"outputs in {out_dir}")


if __name__ == "__main__":
    main()
