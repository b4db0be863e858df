"""Command-line experiment runner.

Subcommands cover the full narrative: ``synth`` writes a correlated
synthetic domain pair as CSV triples plus a ground-truth latent file,
``train`` fits the dual model on a pair and saves the weight bundle,
``eval`` runs record-stratified cross validation and emits metric reports,
``alpha-sweep`` repeats the evaluation across a transfer-rate grid, and
``nmf-lab`` runs the dual nonnegative-factorization convergence experiment
and emits its loss trace.

Configuration is a flat ``key=value`` text file; command-line flags
override file keys, file keys override defaults. Unknown keys and
out-of-range values fail fast with a one-line error. Every run writes the
effective configuration next to its outputs so results are re-derivable.
Reruns with the same config and seed produce byte-identical text outputs
(CSV, JSON, config echo). Set DUALREC_VERBOSE=1 for progress lines on
stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dualrec import evaluate, features, nmflab
from dualrec.dualmodel import TrainConfig, save_dual_model, train_pair
from dualrec.features import load_domain, load_schema, require_disjoint_items, save_schema, synth_pair, write_domain


@dataclass
class ExperimentConfig:
    """Every knob of every pipeline, with standard defaults."""

    alpha: float = 0.03
    embed_dim: int = 8
    epochs: int = 100
    tol: float = 1e-5
    lr_a: float = 0.1
    lr_b: float = 0.1
    lr_map: float = 0.01
    batch_size: int = 32
    penalty_weight: float = 1.0
    folds: int = 5
    seed: int = 0
    rank_k: int = 5
    tau: float = 0.5
    ae_epochs: int = 500
    ae_lr: float = 0.05
    ae_batch_size: int = 32
    # synthetic pair generation
    rho: float = 0.8
    sigma: float = 0.05
    density: float = 0.05
    n_users: int = 500
    n_items: int = 200
    latent_dim: int = 8
    # transfer-rate sweep, comma-separated
    alphas: str = "0,0.01,0.03,0.05,0.1,0.2"
    # dual-NMF lab
    nmf_rows: int = 20
    nmf_cols: int = 15
    nmf_rank: int = 4
    nmf_alpha: float = 0.1
    nmf_iters: int = 5000
    nmf_tol: float = 1e-8
    nmf_scale: float = 1.0


_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"config key {key} expects a {kind}, got {raw!r}") from None


def validate_config(cfg: ExperimentConfig) -> None:
    """Bounds checks; every message names the violated bound."""
    if not 0.0 <= cfg.alpha < 0.5:
        raise ValueError(f"alpha={cfg.alpha} outside [0, 0.5)")
    if not 0.0 <= cfg.nmf_alpha < 0.5:
        raise ValueError(f"nmf_alpha={cfg.nmf_alpha} outside [0, 0.5)")
    if not 0.0 <= cfg.rho <= 1.0:
        raise ValueError(f"rho={cfg.rho} outside [0, 1]")
    if not 0.0 < cfg.density <= 1.0:
        raise ValueError(f"density={cfg.density} outside (0, 1]")
    if not 0.0 < cfg.tau < 1.0:
        raise ValueError(f"tau={cfg.tau} outside (0, 1)")
    if cfg.sigma < 0:
        raise ValueError(f"sigma={cfg.sigma} below 0")
    if cfg.tol < 0 or cfg.nmf_tol < 0:
        raise ValueError("tol and nmf_tol must be >= 0")
    for key in ("embed_dim", "epochs", "batch_size", "folds", "rank_k", "ae_epochs",
                "ae_batch_size", "n_users", "n_items", "latent_dim",
                "nmf_rows", "nmf_cols", "nmf_rank", "nmf_iters"):
        if getattr(cfg, key) < 1:
            raise ValueError(f"{key}={getattr(cfg, key)} below 1")
    for key in ("lr_a", "lr_b", "lr_map", "ae_lr", "penalty_weight"):
        if getattr(cfg, key) < 0:
            raise ValueError(f"{key}={getattr(cfg, key)} below 0")
    for a in parse_alphas(cfg.alphas):
        if not 0.0 <= a < 0.5:
            raise ValueError(f"alphas entry {a} outside [0, 0.5)")
    if cfg.nmf_rank > min(cfg.nmf_rows, cfg.nmf_cols):
        raise ValueError(f"nmf_rank={cfg.nmf_rank} above min(nmf_rows, nmf_cols)={min(cfg.nmf_rows, cfg.nmf_cols)}")


def parse_alphas(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"alphas must be comma-separated numbers, got {text!r}") from None


def load_config(path) -> ExperimentConfig:
    """Flat key=value file; unknown keys are an error, absent keys default."""
    cfg = ExperimentConfig()
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            if key not in _FIELDS:
                raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
            setattr(cfg, key, _parse_value(key, raw.strip()))
    return cfg


def save_config(cfg: ExperimentConfig, path) -> None:
    """Effective-config echo; reloading reproduces the exact config."""
    lines = []
    for name in sorted(_FIELDS):
        value = getattr(cfg, name)
        lines.append(f"{name}={value!r}" if isinstance(value, float) else f"{name}={value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def to_train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        alpha=cfg.alpha,
        embed_dim=cfg.embed_dim,
        epochs=cfg.epochs,
        tol=cfg.tol,
        lr_a=cfg.lr_a,
        lr_b=cfg.lr_b,
        lr_map=cfg.lr_map,
        batch_size=cfg.batch_size,
        penalty_weight=cfg.penalty_weight,
        ae_lr=cfg.ae_lr,
        ae_epochs=cfg.ae_epochs,
        ae_batch_size=cfg.ae_batch_size,
    )


def _log(msg: str) -> None:
    if os.environ.get("DUALREC_VERBOSE"):
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# dataset file layout shared by synth (writer) and train/eval (readers)


def _domain_paths(root: Path, name: str) -> dict:
    return {
        "interactions": root / f"{name}_interactions.csv",
        "user_features": root / f"{name}_user_features.csv",
        "item_features": root / f"{name}_item_features.csv",
        "user_schema": root / f"{name}_user_schema.txt",
        "item_schema": root / f"{name}_item_schema.txt",
    }


def load_pair(data_dir) -> tuple[features.DomainDataset, features.DomainDataset]:
    root = Path(data_dir)
    out = []
    for name in ("a", "b"):
        paths = _domain_paths(root, name)
        for p in paths.values():
            if not p.exists():
                raise FileNotFoundError(f"missing dataset file {p}")
        ds = load_domain(
            paths["interactions"],
            paths["user_features"],
            paths["item_features"],
            load_schema(paths["user_schema"]),
            load_schema(paths["item_schema"]),
            domain_name=name,
        )
        out.append(ds)
    require_disjoint_items(out[0], out[1])
    return out[0], out[1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: ExperimentConfig, out_dir: Path) -> int:
    ds_a, ds_b, truth = synth_pair(
        n_users=cfg.n_users,
        n_items_per_domain=cfg.n_items,
        latent_dim=cfg.latent_dim,
        cross_correlation=cfg.rho,
        noise=cfg.sigma,
        density=cfg.density,
        seed=cfg.seed,
    )
    for name, ds in (("a", ds_a), ("b", ds_b)):
        paths = _domain_paths(out_dir, name)
        write_domain(ds, paths["interactions"], paths["user_features"], paths["item_features"])
        save_schema(ds.user_schema, paths["user_schema"])
        save_schema(ds.item_schema, paths["item_schema"])
    np.savez(
        out_dir / "truth.npz",
        q=truth.q,
        user_latents_a=truth.user_latents_a,
        user_latents_b=truth.user_latents_b,
        item_latents_a=truth.item_latents_a,
        item_latents_b=truth.item_latents_b,
        user_ids=np.array(truth.user_ids, dtype=np.str_),
        item_ids_a=np.array(truth.item_ids_a, dtype=np.str_),
        item_ids_b=np.array(truth.item_ids_b, dtype=np.str_),
    )
    save_config(cfg, out_dir / "config.txt")
    _log(f"synth: {len(ds_a.interactions)} + {len(ds_b.interactions)} interactions -> {out_dir}")
    return 0


def cmd_train(cfg: ExperimentConfig, data_dir: Path, out_dir: Path) -> int:
    ds_a, ds_b = load_pair(data_dir)
    dm, (trace_a, trace_b) = train_pair(ds_a, ds_b, to_train_config(cfg), seed=cfg.seed)
    save_dual_model(dm, out_dir / "model.npz")
    evaluate.write_trace_csv(
        out_dir / "loss_trace.csv",
        ["epoch", "loss_a", "loss_b"],
        [(e, la, lb) for e, (la, lb) in enumerate(zip(trace_a, trace_b))],
    )
    save_config(cfg, out_dir / "config.txt")
    _log(f"train: {len(trace_a) - 1} epochs -> {out_dir / 'model.npz'}")
    return 0


def cmd_eval(cfg: ExperimentConfig, data_dir: Path, out_dir: Path) -> int:
    ds_a, ds_b = load_pair(data_dir)
    rep_a, rep_b = evaluate.run_cv(
        ds_a, ds_b, to_train_config(cfg), k=cfg.folds, seed=cfg.seed, rank_k=cfg.rank_k, tau=cfg.tau
    )
    evaluate.write_report_csv(out_dir / "report.csv", [rep_a, rep_b])
    evaluate.write_summary_json(out_dir / "summary.json", evaluate.report_summary([rep_a, rep_b]))
    save_config(cfg, out_dir / "config.txt")
    _log(f"eval: rmse a={rep_a.rmse:.4f} b={rep_b.rmse:.4f} -> {out_dir}")
    return 0


def cmd_alpha_sweep(cfg: ExperimentConfig, data_dir: Path, out_dir: Path) -> int:
    ds_a, ds_b = load_pair(data_dir)
    points = evaluate.alpha_sweep(
        ds_a,
        ds_b,
        parse_alphas(cfg.alphas),
        to_train_config(cfg),
        k=cfg.folds,
        seed=cfg.seed,
        rank_k=cfg.rank_k,
        tau=cfg.tau,
    )
    evaluate.write_sweep_csv(out_dir / "sweep.csv", points)
    summary = {
        "alphas": [pt.alpha for pt in points],
        "points": {
            repr(pt.alpha): evaluate.report_summary([pt.report_a, pt.report_b]) for pt in points
        },
    }
    evaluate.write_summary_json(out_dir / "summary.json", summary)
    save_config(cfg, out_dir / "config.txt")
    _log(f"alpha-sweep: {len(points)} points -> {out_dir}")
    return 0


def cmd_nmf_lab(cfg: ExperimentConfig, out_dir: Path) -> int:
    problem = nmflab.make_random_problem(
        cfg.nmf_rows, cfg.nmf_cols, cfg.nmf_rank, cfg.nmf_alpha, cfg.seed, scale=cfg.nmf_scale
    )
    conditions_before = nmflab.check_conditions(problem)
    perturbed = not all(conditions_before.values())
    if perturbed:
        problem = nmflab.perturb_problem(problem, cfg.nmf_scale)
    conditions_after = nmflab.check_conditions(problem)
    state = nmflab.run_nmf(problem, max_iters=cfg.nmf_iters, tol=cfg.nmf_tol, seed=cfg.seed)
    trace = state.loss_trace
    evaluate.write_trace_csv(
        out_dir / "nmf_trace.csv", ["iteration", "loss"], list(enumerate(trace))
    )
    reduced_part, cross_part = nmflab.loss_decomposition(problem, state)
    summary = {
        "alpha": cfg.nmf_alpha,
        "rank": cfg.nmf_rank,
        "shape": [cfg.nmf_rows, cfg.nmf_cols],
        "conditions_before": conditions_before,
        "perturbation_applied": perturbed,
        "conditions_after": conditions_after,
        "iterations": len(trace) - 1,
        "converged": len(trace) - 1 < cfg.nmf_iters,
        "final_traced_loss": trace[-1],
        "final_direct_loss": nmflab.dual_loss(problem, state),
        "final_reduced_part": reduced_part,
        "final_cross_part": cross_part,
    }
    evaluate.write_summary_json(out_dir / "nmf_summary.json", summary)
    save_config(cfg, out_dir / "config.txt")
    _log(f"nmf-lab: {summary['iterations']} iterations, final loss {trace[-1]:.3e} -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_override(parser: argparse.ArgumentParser, flag: str, key: str, help_text: str) -> None:
    kind = _FIELDS[key]
    typ = int if kind == "int" else float if kind == "float" else str
    parser.add_argument(flag, dest=key, type=typ, default=None, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualrec",
        description="Dual-transfer cross-domain recommendation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic correlated domain pair")
    p_synth.add_argument("--out", required=True, help="output directory")
    _add_override(p_synth, "--rho", "rho", "cross-domain correlation in [0, 1]")
    _add_override(p_synth, "--sigma", "sigma", "rating noise standard deviation")
    _add_override(p_synth, "--density", "density", "observation probability in (0, 1]")
    _add_override(p_synth, "--n-users", "n_users", "users shared by both domains")
    _add_override(p_synth, "--n-items", "n_items", "items per domain")
    _add_override(p_synth, "--latent-dim", "latent_dim", "ground-truth latent dimension")

    p_train = sub.add_parser("train", help="train the dual model on a domain pair")
    p_train.add_argument("--data", required=True, help="directory produced by synth (or same layout)")
    p_train.add_argument("--out", required=True, help="output directory")
    _add_override(p_train, "--alpha", "alpha", "transfer rate in [0, 0.5)")
    _add_override(p_train, "--epochs", "epochs", "epoch budget")
    _add_override(p_train, "--embed-dim", "embed_dim", "embedding size")

    p_eval = sub.add_parser("eval", help="cross-validate and write metric reports")
    p_eval.add_argument("--data", required=True, help="dataset directory")
    p_eval.add_argument("--out", required=True, help="output directory")
    _add_override(p_eval, "--alpha", "alpha", "transfer rate in [0, 0.5)")
    _add_override(p_eval, "--folds", "folds", "cross-validation folds")
    _add_override(p_eval, "--epochs", "epochs", "epoch budget")

    p_sweep = sub.add_parser("alpha-sweep", help="cross-validate across a transfer-rate grid")
    p_sweep.add_argument("--data", required=True, help="dataset directory")
    p_sweep.add_argument("--out", required=True, help="output directory")
    _add_override(p_sweep, "--alphas", "alphas", "comma-separated transfer rates")
    _add_override(p_sweep, "--folds", "folds", "cross-validation folds")
    _add_override(p_sweep, "--epochs", "epochs", "epoch budget")

    p_nmf = sub.add_parser("nmf-lab", help="dual-NMF convergence experiment")
    p_nmf.add_argument("--out", required=True, help="output directory")
    _add_override(p_nmf, "--alpha", "nmf_alpha", "coupling weight in [0, 0.5)")
    _add_override(p_nmf, "--rows", "nmf_rows", "rating matrix rows")
    _add_override(p_nmf, "--cols", "nmf_cols", "rating matrix columns")
    _add_override(p_nmf, "--rank", "nmf_rank", "factorization rank")
    _add_override(p_nmf, "--iters", "nmf_iters", "iteration budget")

    for p in (p_synth, p_train, p_eval, p_sweep, p_nmf):
        p.add_argument("--config", default=None, help="key=value config file")
        _add_override(p, "--seed", "seed", "base random seed")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        for key in _FIELDS:
            override = getattr(args, key, None)
            if override is not None:
                setattr(cfg, key, override)
        validate_config(cfg)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            return cmd_synth(cfg, out_dir)
        if args.command == "train":
            return cmd_train(cfg, Path(args.data), out_dir)
        if args.command == "eval":
            return cmd_eval(cfg, Path(args.data), out_dir)
        if args.command == "alpha-sweep":
            return cmd_alpha_sweep(cfg, Path(args.data), out_dir)
        if args.command == "nmf-lab":
            return cmd_nmf_lab(cfg, out_dir)
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
