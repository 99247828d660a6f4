"""Command-line entry point: reproducible runs, sweeps, and table emission.

Every subcommand is a pure function of (config file, flags, seed):
rerunning a command writes byte-identical outputs.  The config is one
JSON document with nested sections (dataset / train / sweep / dp / mi);
command-line flags override the corresponding config values.  All numeric
outputs are CSV with a header row (plotting is left to external tools).

    decorrlab gen-data     --config cfg.json --out-dir out
    decorrlab solve-theory --config cfg.json --out-dir out
    decorrlab train        --config cfg.json --out-dir out
    decorrlab evaluate     --config cfg.json --model-dir out --out-dir out
    decorrlab sweep        --config cfg.json --out-dir out --threads 4
    decorrlab dp-risk      --config cfg.json --out-dir out
    decorrlab mi-estimate  --config cfg.json --data out/test.csv --out-dir out
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import LabeledDataset, load_dataset, save_dataset
from .encoders import FeedforwardEncoder, load_encoder, save_encoder
from .experiments import (
    TradeoffCurve,
    benchmark_config,
    derive_seed,
    make_adversary,
    run_task_point,
    sweep_gmm,
    sweep_task,
)
from .gmm import GaussianMixtureSpec, map_accuracy_closed_form, sample_labeled, sample_labeled_with_task
from .metrics import adversary_accuracy, demographic_parity_gap, equalized_odds_gap
from .mi import mi_with_discrete_label, pca_project
from .dp import gaussian_epsilon, laplace_epsilon
from .nn import load_model, mlp, save_model
from .numerics import RngState
from .training import TrainConfig, make_affine_encoder, train, train_task_aware
from .water_filling import theory_frontier

_CONFIG_SECTIONS = ("seed", "dataset", "train", "sweep", "dp", "mi")


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    for key in config:
        if key not in _CONFIG_SECTIONS:
            raise ConfigError(f"unknown config section {key!r} (allowed: {_CONFIG_SECTIONS})")
    return config


def _section(config, name, required: bool = True) -> dict:
    value = config.get(name)
    if value is None:
        if required:
            raise ConfigError(f"config is missing the {name!r} section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _get(section, section_name, key, default=None, required=False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"config field {section_name}.{key} is required")
    return default


def _mixture_from_config(dataset: dict) -> GaussianMixtureSpec:
    dim = int(_get(dataset, "dataset", "dim", required=True))
    q = _get(dataset, "dataset", "q", required=True)
    if not (0.0 < q < 1.0):
        raise ConfigError(f"dataset.q must lie strictly between 0 and 1, got {q}")
    mu_spec = _get(dataset, "dataset", "mu", required=True)
    if isinstance(mu_spec, dict):
        lo = _get(mu_spec, "dataset.mu", "low", required=True)
        hi = _get(mu_spec, "dataset.mu", "high", required=True)
        mu = lo + (hi - lo) * np.arange(dim) / max(dim - 1, 1)
    else:
        mu = np.asarray(mu_spec, dtype=np.float64)
        if mu.shape != (dim,):
            raise ConfigError(f"dataset.mu must have {dim} entries, got {mu.shape}")
    sig = _get(dataset, "dataset", "sigma_sq", 1.0)
    sigma_sq = np.full(dim, float(sig)) if np.isscalar(sig) else np.asarray(sig, dtype=np.float64)
    return GaussianMixtureSpec(q, mu, sigma_sq)


def _generate_datasets(config: dict, seed: int):
    dataset = _section(config, "dataset")
    kind = _get(dataset, "dataset", "kind", "gmm")
    n_train = int(_get(dataset, "dataset", "n_train", 20000))
    n_test = int(_get(dataset, "dataset", "n_test", 2000))
    spec = _mixture_from_config(dataset)
    rng = RngState(derive_seed(seed, "dataset"))
    if kind == "gmm":
        x_tr, s_tr = sample_labeled(spec, n_train, rng.child("train"))
        x_te, s_te = sample_labeled(spec, n_test, rng.child("test"))
        return spec, LabeledDataset(x_tr, s_tr), LabeledDataset(x_te, s_te)
    if kind == "synthetic-task":
        w = np.asarray(_get(dataset, "dataset", "task_weights", required=True), dtype=np.float64)
        bias = float(_get(dataset, "dataset", "task_bias", 0.0))
        noise = float(_get(dataset, "dataset", "label_noise", 0.0))
        x_tr, s_tr, y_tr = sample_labeled_with_task(spec, n_train, rng.child("train"), w, bias, noise)
        x_te, s_te, y_te = sample_labeled_with_task(spec, n_test, rng.child("test"), w, bias, noise)
        return spec, LabeledDataset(x_tr, s_tr, y_tr), LabeledDataset(x_te, s_te, y_te)
    raise ConfigError(f"unknown dataset.kind {kind!r}")


def _train_config(config: dict, seed: int) -> TrainConfig:
    section = _section(config, "train")
    known = {
        "distortion": ("distortion_bound", float),
        "iterations": ("iterations", int),
        "adversary_epochs": ("adversary_epochs", int),
        "batch_size": ("batch_size", int),
        "encoder_lr": ("encoder_lr", float),
        "adversary_lr": ("adversary_lr", float),
        "classifier_lr": ("classifier_lr", float),
        "rho0": ("rho0", float),
        "rho_growth": ("rho_growth", float),
        "rho_max": ("rho_max", float),
        "rho_period": ("rho_period", int),
        "constraint": ("constraint", str),
        "squared_penalty": ("squared_penalty", bool),
        "mode": ("mode", str),
        "utility_weight": ("utility_weight", float),
        "per_feature_distortion": ("per_feature_distortion", bool),
        "encoder_inputs": ("encoder_inputs", str),
        "encoder_lr_decay": ("encoder_lr_decay", float),
        "expected_distortion": ("expected_distortion", bool),
    }
    passthrough = {"encoder", "encoder_hidden", "noise_dim", "adversary_hidden"}
    kwargs = {}
    for key, value in section.items():
        if key in passthrough:
            continue
        if key not in known:
            raise ConfigError(f"unknown config field train.{key}")
        name, cast = known[key]
        kwargs[name] = cast(value) if value is not None else None
    if "distortion_bound" not in kwargs:
        raise ConfigError("config field train.distortion is required")
    try:
        return TrainConfig(seed=seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid train section: {exc}") from None


def _build_encoder(config: dict, train_cfg: TrainConfig, dim: int, n_sensitive: int):
    section = _section(config, "train")
    family = _get(section, "train", "encoder", "affine")
    if family == "affine":
        return make_affine_encoder(dim, train_cfg.distortion_bound)
    if family == "feedforward":
        hidden = tuple(_get(section, "train", "encoder_hidden", [2 * dim]))
        noise_dim = int(_get(section, "train", "noise_dim", dim))
        return FeedforwardEncoder(
            dim,
            noise_dim,
            hidden,
            RngState(train_cfg.seed).child("encoder-init"),
            n_sensitive=n_sensitive if train_cfg.encoder_inputs == "sx" else 0,
        )
    raise ConfigError(f"unknown train.encoder {family!r}")


def _adversary_hidden(config) -> tuple:
    return tuple(_get(_section(config, "train"), "train", "adversary_hidden", [32, 32]))


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, train_ds, test_ds = _generate_datasets(config, seed)
    save_dataset(train_ds, out / "train.csv")
    save_dataset(test_ds, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({train_ds.n} rows) and {out / 'test.csv'} ({test_ds.n} rows)")
    return 0


def _cmd_solve_theory(args) -> int:
    config = _load_config(args.config)
    spec = _mixture_from_config(_section(config, "dataset"))
    sweep = _section(config, "sweep")
    distortions = sorted(float(d) for d in _get(sweep, "sweep", "distortions", required=True))
    points = theory_frontier(spec, distortions)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "theory_frontier.csv"
    with open(path, "w") as fh:
        fh.write("distortion,theory_accuracy,lambda0\n")
        for p in points:
            fh.write(f"{p.distortion!r},{p.accuracy!r},{p.lambda0!r}\n")
    print(f"wrote {path}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec, train_ds, _ = _generate_datasets(config, seed)
    train_cfg = _train_config(config, seed)
    if train_cfg.batch_size > train_ds.n:
        raise ConfigError(
            f"train.batch_size ({train_cfg.batch_size}) exceeds the training set size ({train_ds.n})"
        )
    n_sensitive = int(train_ds.s.max()) + 1
    encoder = _build_encoder(config, train_cfg, train_ds.dim, n_sensitive)
    adversary = make_adversary(
        train_ds.dim, RngState(train_cfg.seed).child("adversary-init"), _adversary_hidden(config), n_sensitive
    )
    if train_cfg.mode == "task-aware":
        if train_ds.y is None:
            raise ConfigError("train.mode task-aware requires a dataset with Y labels")
        classifier = mlp(
            (train_ds.dim, 16, int(train_ds.y.max()) + 1),
            RngState(train_cfg.seed).child("classifier-init"),
        )
        result = train_task_aware(train_ds, encoder, adversary, classifier, train_cfg)
    else:
        result = train(train_ds, encoder, adversary, train_cfg)
    save_encoder(encoder, out / "encoder.npz")
    save_model(adversary, out / "adversary.npz")
    history_path = out / "history.csv"
    with open(history_path, "w") as fh:
        fh.write("iteration,adversary_loss,encoder_loss,distortion,rho,lambda\n")
        h = result.history
        for i in range(len(h["iteration"])):
            fh.write(
                f"{int(h['iteration'][i])},{h['adversary_loss'][i]!r},{h['encoder_loss'][i]!r},"
                f"{h['distortion'][i]!r},{h['rho'][i]!r},{h['lambda'][i]!r}\n"
            )
    print(
        f"wrote {out / 'encoder.npz'}, {out / 'adversary.npz'}, {history_path} "
        f"(final distortion {result.final_distortion:.6g}, bound {train_cfg.distortion_bound:.6g})"
    )
    return 0


def _cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_dir = Path(args.model_dir)
    encoder = load_encoder(model_dir / "encoder.npz")
    adversary = load_model(model_dir / "adversary.npz")
    spec, train_ds, test_ds = _generate_datasets(config, seed)
    rng = RngState(derive_seed(seed, "evaluate"))
    s_onehot = None
    if getattr(encoder, "n_sensitive", 0):
        from .training import one_hot

        s_onehot = one_hot(test_ds.s, int(train_ds.s.max()) + 1)
    x_r, _ = encoder.encode(test_ds.x, rng.child("noise"), sensitive_onehot=s_onehot, training=False)
    payload = {"adversary_accuracy_learned": adversary_accuracy(adversary, x_r, test_ds.s)}
    if hasattr(encoder, "mechanism"):
        payload["adversary_accuracy_map_oracle"] = map_accuracy_closed_form(spec, encoder.mechanism())
    if test_ds.y is not None:
        from .metrics import train_and_eval_downstream

        x_r_train, _ = encoder.encode(train_ds.x, rng.child("train-noise"), training=False)
        acc, fairness = train_and_eval_downstream(
            LabeledDataset(x_r_train, train_ds.s, train_ds.y),
            LabeledDataset(x_r, test_ds.s, test_ds.y),
            rng.child("downstream"),
        )
        payload["downstream_accuracy"] = acc
        payload["max_demp"] = fairness.max_demp
        payload["eo_gap"] = {str(k): v for k, v in (fairness.eo_gap or {}).items()}
    path = out / "metrics.json"
    _write_json(path, payload)
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _section(config, "dataset")
    sweep = _section(config, "sweep")
    distortions = _get(sweep, "sweep", "distortions", required=True)
    iterations = int(_get(sweep, "sweep", "iterations", 600))
    kind = _get(dataset, "dataset", "kind", "gmm")
    overrides = {}
    train_section = _section(config, "train", required=False)
    for key in ("constraint", "adversary_epochs", "batch_size"):
        if key in train_section:
            overrides[key] = train_section[key]
    if kind == "gmm":
        spec = _mixture_from_config(dataset)
        curve = sweep_gmm(
            spec,
            int(_get(dataset, "dataset", "n_train", 20000)),
            int(_get(dataset, "dataset", "n_test", 2000)),
            distortions,
            seed,
            iterations=iterations,
            estimate_mi=bool(_get(sweep, "sweep", "estimate_mi", False)),
            threads=args.threads,
            config_overrides=overrides or None,
        )
    elif kind == "synthetic-task":
        _, train_ds, test_ds = _generate_datasets(config, seed)
        curve = sweep_task(
            train_ds,
            test_ds,
            distortions,
            seed,
            iterations=iterations,
            threads=args.threads,
            config_overrides=overrides or None,
        )
    else:
        raise ConfigError(f"unknown dataset.kind {kind!r}")
    path = out / "tradeoff.csv"
    curve.to_csv(path)
    print(f"wrote {path}")
    return 0


def _cmd_dp_risk(args) -> int:
    config = _load_config(args.config)
    dp = _section(config, "dp")
    dim = int(_get(dp, "dp", "dim", required=True))
    delta = float(_get(dp, "dp", "delta", 1e-6))
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"dp.delta must lie strictly between 0 and 1, got {delta}")
    distortions = [float(d) for d in _get(dp, "dp", "distortions", required=True)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dp_risk.csv"
    with open(path, "w") as fh:
        fh.write("distortion,laplace_epsilon,gaussian_epsilon\n")
        for d in distortions:
            lap = laplace_epsilon(dim, d)
            gau = gaussian_epsilon(dim, d, delta)
            fh.write(f"{d!r},{lap!r},{gau!r}\n")
    print(f"wrote {path}")
    return 0


def _cmd_mi_estimate(args) -> int:
    config = _load_config(args.config)
    mi_cfg = _section(config, "mi", required=False)
    k = int(_get(mi_cfg, "mi", "k", 4))
    components = _get(mi_cfg, "mi", "pca_components", None)
    dataset = load_dataset(args.data)
    cloud = dataset.x
    if components is not None:
        cloud = pca_project(cloud, int(components))
    estimate = mi_with_discrete_label(cloud, dataset.s, k=k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mi.json"
    _write_json(
        path,
        {"estimated_mi": estimate.value, "estimated_mi_raw": estimate.raw, "k": k,
         "pca_components": components, "n": dataset.n, "dim": int(cloud.shape[1])},
    )
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decorrlab",
        description="Train, solve, and evaluate sensitive-attribute-decorrelated representations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_dir=False, data=False, threads=False):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", default="out", help="output directory (created if missing)")
        if model_dir:
            p.add_argument("--model-dir", required=True, help="directory holding encoder.npz/adversary.npz")
        if data:
            p.add_argument("--data", required=True, help="dataset CSV written by gen-data/save_dataset")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="worker processes for sweep points")

    common(sub.add_parser("gen-data", help="write seed-deterministic synthetic datasets"))
    common(sub.add_parser("solve-theory", help="closed-form accuracy/distortion frontier"))
    common(sub.add_parser("train", help="one constrained minimax training run"))
    common(sub.add_parser("evaluate", help="score saved models on the test split"), model_dir=True)
    common(sub.add_parser("sweep", help="train+evaluate across a distortion list"), threads=True)
    common(sub.add_parser("dp-risk", help="local differential-privacy risk table"))
    common(sub.add_parser("mi-estimate", help="k-NN mutual information of a dataset file"), data=True)
    return parser


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "solve-theory": _cmd_solve_theory,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "dp-risk": _cmd_dp_risk,
    "mi-estimate": _cmd_mi_estimate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
