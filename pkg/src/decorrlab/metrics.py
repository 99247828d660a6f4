"""Censoring, utility, and fairness measurement.

Censoring is scored by how well a classifier predicts the sensitive
attribute from the released representation; fairness of a prediction
Yhat by the demographic-parity gap

    gap(y) = max_{s,s'} | P(Yhat=y | S=s) - P(Yhat=y | S=s') |

and, when ground truth is available, by the per-outcome equalized-odds
gap, the spread across groups of P(Yhat = Y | S=s, Y=y).  Group cells
with too few samples are excluded rather than producing noise rates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .nn import MlpModel, fit_classifier, forward
from .numerics import RngState

__all__ = [
    "FairnessReport",
    "demographic_parity_gap",
    "equalized_odds_gap",
    "adversary_accuracy",
    "train_and_eval_downstream",
]

# Cells with fewer samples than this are dropped from equalized-odds rates
# (tiny groups-within-outcome make the conditional rate meaningless).
MIN_CELL_COUNT = 5


@dataclass
class FairnessReport:
    demp_gap: dict  # outcome -> demographic-parity gap
    max_demp: float
    rates: dict  # (group, outcome) -> P(Yhat=outcome | S=group)
    eo_gap: dict | None = None  # outcome -> equalized-odds gap, when Y known


def demographic_parity_gap(
    predictions, sensitive, min_group_count: int = 1
) -> FairnessReport:
    """Empirical per-outcome demographic-parity gaps across sensitive groups.

    Groups with fewer than ``min_group_count`` rows are excluded; at least
    two groups must survive for the gap to be defined.
    """
    pred = np.asarray(predictions)
    s = np.asarray(sensitive)
    if pred.shape != s.shape:
        raise ValueError("predictions and sensitive labels must have equal length")
    groups = [g for g in np.unique(s) if (s == g).sum() >= min_group_count]
    if len(groups) < 2:
        raise ValueError("demographic parity needs at least two sensitive groups")
    outcomes = np.unique(pred)
    rates = {}
    for g in groups:
        mask = s == g
        for y in outcomes:
            rates[(g, y)] = float(np.mean(pred[mask] == y))
    demp = {}
    for y in outcomes:
        vals = [rates[(g, y)] for g in groups]
        demp[y] = max(vals) - min(vals)
    return FairnessReport(demp_gap=demp, max_demp=max(demp.values()), rates=rates)


def equalized_odds_gap(
    predictions, truth, sensitive, min_cell_count: int = MIN_CELL_COUNT
) -> dict:
    """Per-outcome equalized-odds gaps max_{s,s'} |P(Yhat=Y|s,y) - P(Yhat=Y|s',y)|.

    (group, outcome) cells with fewer than ``min_cell_count`` rows are
    skipped with a warning, mirroring how near-empty group/outcome
    combinations are dropped from survey-style tabulations.
    """
    pred = np.asarray(predictions)
    y_true = np.asarray(truth)
    s = np.asarray(sensitive)
    if not (pred.shape == y_true.shape == s.shape):
        raise ValueError("predictions, truth, and sensitive labels must have equal length")
    gaps = {}
    for y in np.unique(y_true):
        rates = []
        for g in np.unique(s):
            cell = (s == g) & (y_true == y)
            if cell.sum() < min_cell_count:
                warnings.warn(
                    f"equalized-odds cell (group={g!r}, outcome={y!r}) has "
                    f"{int(cell.sum())} samples; excluded"
                )
                continue
            rates.append(float(np.mean(pred[cell] == y_true[cell])))
        if len(rates) >= 2:
            gaps[y] = max(rates) - min(rates)
        else:
            warnings.warn(f"outcome {y!r} has fewer than two usable groups; gap undefined")
    return gaps


def adversary_accuracy(classifier: MlpModel, encoded: np.ndarray, sensitive) -> float:
    """Top-1 accuracy of a trained classifier at recovering S from X_r."""
    encoded = np.asarray(encoded, dtype=np.float64)
    s = np.asarray(sensitive)
    if encoded.shape[0] == 0:
        raise ValueError("empty evaluation set")
    logits, _ = forward(classifier, encoded, training=False)
    return float(np.mean(logits.argmax(axis=1) == s))


def train_and_eval_downstream(
    encoded_train: LabeledDataset,
    encoded_test: LabeledDataset,
    rng: RngState,
    hidden=(16, 8),
    epochs: int = 30,
    batch_size: int = 256,
    lr: float = 0.005,
):
    """Fit a fresh downstream classifier on an encoded split and score it.

    Returns (test accuracy, FairnessReport with equalized-odds gaps filled).
    Evaluation runs on the encoded test split, i.e. the downstream user
    only ever sees released representations.
    """
    if encoded_train.y is None or encoded_test.y is None:
        raise ValueError("downstream evaluation requires Y labels")
    model = fit_classifier(
        encoded_train.x,
        encoded_train.y,
        hidden,
        rng,
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
    )
    logits, _ = forward(model, encoded_test.x, training=False)
    preds = logits.argmax(axis=1)
    accuracy = float(np.mean(preds == encoded_test.y))
    report = demographic_parity_gap(preds, encoded_test.s)
    report.eo_gap = equalized_odds_gap(preds, encoded_test.y, encoded_test.s)
    return accuracy, report
