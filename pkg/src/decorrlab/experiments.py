"""Prebuilt benchmark instances and distortion-sweep experiments.

The reference synthetic benchmark is a 32-dimensional mixture with unit
variances and a linear ramp of mean separations (0.2 to 0.5 per
coordinate), so the optimal noise allocation is genuinely heterogeneous
(low-separation coordinates drop out of the allocation at small budgets)
while remaining learnable at the scale of a laptop run.  A sweep trains
one encoder/adversary pair per distortion budget and reports, per budget,
the trained adversary's held-out accuracy, the MAP oracle's closed-form
accuracy against the learned mechanism, the water-filling optimum, and
optionally a k-NN mutual-information estimate and downstream-task
metrics.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .data import LabeledDataset
from .encoders import AffineGaussianEncoder, FeedforwardEncoder
from .gmm import (
    GaussianMixtureSpec,
    map_accuracy_closed_form,
    sample_labeled,
    sample_labeled_with_task,
)
from .metrics import adversary_accuracy, train_and_eval_downstream
from .mi import mi_with_discrete_label, pca_project
from .nn import MlpModel, mlp
from .numerics import RngState
from .training import TrainConfig, TrainResult, make_affine_encoder, one_hot, train
from .water_filling import solve_water_filling

__all__ = [
    "benchmark_mixture",
    "benchmark_config",
    "make_adversary",
    "derive_seed",
    "TradeoffRow",
    "TradeoffCurve",
    "run_gmm_point",
    "sweep_gmm",
    "run_task_point",
    "sweep_task",
]

BENCHMARK_DIM = 32
BENCHMARK_MU_RANGE = (0.2, 0.5)
MI_MAX_DIM = 12  # PCA target when certifying high-dimensional representations


def benchmark_mixture(q: float, dim: int = BENCHMARK_DIM, mu_range=BENCHMARK_MU_RANGE) -> GaussianMixtureSpec:
    """The reference mixture: unit variances, ramped mean separations."""
    lo, hi = mu_range
    mu = lo + (hi - lo) * np.arange(dim) / max(dim - 1, 1)
    return GaussianMixtureSpec(q, mu, np.ones(dim))


def benchmark_config(distortion: float, seed: int, iterations: int = 600, **overrides) -> TrainConfig:
    """Training hyperparameters used for the synthetic benchmark runs.

    The affine encoder admits a closed-form expected distortion, so the
    constraint is scored on it, and the encoder step is annealed, which
    removes optimizer chatter against the constraint boundary.
    """
    params = dict(
        distortion_bound=distortion,
        iterations=iterations,
        adversary_epochs=5,
        batch_size=1000,
        encoder_lr=0.005,
        adversary_lr=0.005,
        encoder_lr_decay=0.02,
        expected_distortion=True,
        seed=seed,
    )
    params.update(overrides)
    return TrainConfig(**params)


def make_adversary(dim: int, rng: RngState, hidden=(32, 32), n_classes: int = 2) -> MlpModel:
    """Three-layer leaky-ReLU softmax classifier, the standard adversary."""
    return mlp((dim, *hidden, n_classes), rng, activation="leaky_relu", head="softmax")


def derive_seed(seed: int, tag: str) -> int:
    """Independent 63-bit seed for a named sub-experiment."""
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class TradeoffRow:
    distortion: float
    adversary_accuracy_learned: float | None = None
    adversary_accuracy_map_oracle: float | None = None
    theory_accuracy: float | None = None
    downstream_accuracy: float | None = None
    max_demp: float | None = None
    eo_gap_max: float | None = None
    estimated_mi: float | None = None


@dataclass
class TradeoffCurve:
    rows: list

    def __post_init__(self):
        ds = [r.distortion for r in self.rows]
        if any(b < a for a, b in zip(ds, ds[1:])):
            raise ValueError("tradeoff rows must be sorted by distortion")

    def columns(self) -> list[str]:
        names = [f.name for f in fields(TradeoffRow)]
        return [
            name
            for name in names
            if name == "distortion" or any(getattr(r, name) is not None for r in self.rows)
        ]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                cells = []
                for name in cols:
                    value = getattr(row, name)
                    cells.append("" if value is None else repr(float(value)))
                fh.write(",".join(cells) + "\n")

    @staticmethod
    def from_csv(path) -> "TradeoffCurve":
        with open(path) as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        header = lines[0].split(",")
        rows = []
        for line in lines[1:]:
            cells = line.split(",")
            kwargs = {
                name: (float(cell) if cell else None) for name, cell in zip(header, cells)
            }
            rows.append(TradeoffRow(**kwargs))
        return TradeoffCurve(rows)


def _estimate_representation_mi(x_r: np.ndarray, s: np.ndarray, k: int = 4) -> float:
    cloud = x_r
    if cloud.shape[1] > MI_MAX_DIM:
        cloud = pca_project(cloud, MI_MAX_DIM)
    return mi_with_discrete_label(cloud, s, k=k).value


def run_gmm_point(
    spec: GaussianMixtureSpec,
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    distortion: float,
    seed: int,
    iterations: int = 600,
    estimate_mi: bool = False,
    config_overrides: dict | None = None,
):
    """Train at one budget and evaluate every comparison column.

    Returns (TradeoffRow, TrainResult); the learned mechanism is exposed
    through the result's encoder.
    """
    config = benchmark_config(
        distortion, derive_seed(seed, f"train-D{distortion}"), iterations, **(config_overrides or {})
    )
    encoder = make_affine_encoder(spec.dim, distortion)
    adversary = make_adversary(spec.dim, RngState(config.seed).child("adversary-init"))
    result = train(train_ds, encoder, adversary, config)

    eval_rng = RngState(derive_seed(seed, f"eval-D{distortion}"))
    x_r_test, _ = encoder.encode(test_ds.x, eval_rng.child("noise"), training=False)
    learned_acc = adversary_accuracy(adversary, x_r_test, test_ds.s)
    oracle_acc = map_accuracy_closed_form(spec, encoder.mechanism())
    theory_acc = map_accuracy_closed_form(spec, solve_water_filling(spec, distortion).mech)
    mi_value = None
    if estimate_mi:
        mi_value = _estimate_representation_mi(x_r_test, test_ds.s)
    row = TradeoffRow(
        distortion=distortion,
        adversary_accuracy_learned=learned_acc,
        adversary_accuracy_map_oracle=oracle_acc,
        theory_accuracy=theory_acc,
        estimated_mi=mi_value,
    )
    return row, result


def _gmm_point_args(spec, train_ds, test_ds, distortions, seed, iterations, estimate_mi, overrides):
    return [
        (spec, train_ds, test_ds, d, seed, iterations, estimate_mi, overrides)
        for d in distortions
    ]


def _gmm_point_worker(args):
    row, _ = run_gmm_point(*args)
    return row


def sweep_gmm(
    spec: GaussianMixtureSpec,
    n_train: int,
    n_test: int,
    distortions,
    seed: int,
    iterations: int = 600,
    estimate_mi: bool = False,
    threads: int = 1,
    config_overrides: dict | None = None,
) -> TradeoffCurve:
    """One trained point per budget, merged into a tradeoff curve.

    Points are independent runs with derived seeds, so a worker pool
    produces byte-identical results to the sequential path.
    """
    distortions = sorted(float(d) for d in distortions)
    data_rng = RngState(derive_seed(seed, "dataset"))
    x_train, s_train = sample_labeled(spec, n_train, data_rng.child("train"))
    x_test, s_test = sample_labeled(spec, n_test, data_rng.child("test"))
    train_ds = LabeledDataset(x_train, s_train)
    test_ds = LabeledDataset(x_test, s_test)
    args = _gmm_point_args(
        spec, train_ds, test_ds, distortions, seed, iterations, estimate_mi, config_overrides
    )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_gmm_point_worker, args))
    else:
        rows = [_gmm_point_worker(a) for a in args]
    return TradeoffCurve(rows)


def run_task_point(
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    distortion: float,
    seed: int,
    iterations: int = 400,
    config_overrides: dict | None = None,
    downstream_hidden=(16, 8),
):
    """Representation-mode training plus downstream-task evaluation.

    The downstream classifier is trained and evaluated on encoded data
    only (the released-representation protocol), producing the accuracy /
    demographic-parity / equalized-odds columns of the curve.
    """
    if train_ds.y is None or test_ds.y is None:
        raise ValueError("task sweeps need datasets with Y labels")
    dim = train_ds.dim
    config = benchmark_config(
        distortion, derive_seed(seed, f"train-D{distortion}"), iterations, **(config_overrides or {})
    )
    encoder = make_affine_encoder(dim, distortion)
    adversary = make_adversary(dim, RngState(config.seed).child("adversary-init"))
    result = train(train_ds, encoder, adversary, config)

    eval_rng = RngState(derive_seed(seed, f"eval-D{distortion}"))
    x_r_train, _ = encoder.encode(train_ds.x, eval_rng.child("train-noise"), training=False)
    x_r_test, _ = encoder.encode(test_ds.x, eval_rng.child("test-noise"), training=False)
    enc_train = LabeledDataset(x_r_train, train_ds.s, train_ds.y)
    enc_test = LabeledDataset(x_r_test, test_ds.s, test_ds.y)
    accuracy, fairness = train_and_eval_downstream(
        enc_train, enc_test, eval_rng.child("downstream"), hidden=downstream_hidden
    )
    learned_acc = adversary_accuracy(adversary, x_r_test, test_ds.s)
    row = TradeoffRow(
        distortion=distortion,
        adversary_accuracy_learned=learned_acc,
        downstream_accuracy=accuracy,
        max_demp=fairness.max_demp,
        eo_gap_max=max(fairness.eo_gap.values()) if fairness.eo_gap else None,
    )
    return row, result


def _task_point_worker(args):
    row, _ = run_task_point(*args)
    return row


def sweep_task(
    train_ds: LabeledDataset,
    test_ds: LabeledDataset,
    distortions,
    seed: int,
    iterations: int = 400,
    threads: int = 1,
    config_overrides: dict | None = None,
) -> TradeoffCurve:
    distortions = sorted(float(d) for d in distortions)
    args = [
        (train_ds, test_ds, d, seed, iterations, config_overrides) for d in distortions
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_task_point_worker, args))
    else:
        rows = [_task_point_worker(a) for a in args]
    return TradeoffCurve(rows)
