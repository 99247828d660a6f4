"""Alternating minimax training under a distortion constraint.

One outer iteration: draw a minibatch, encode it, give the adversary j
gradient-ascent epochs on its negative loss over the fixed encoded batch,
then take one encoder step on the constrained objective.  The inequality
constraint (mean squared distortion <= D) is folded into the encoder loss
either by an escalating quadratic penalty,

    -adv_loss + rho_t (max{0, distortion - D})^2,

or by an augmented Lagrangian with a slack variable delta >= 0 converting
the inequality to an equality,

    -adv_loss + (rho_t/2)(distortion + delta - D)^2
              - lambda_t (distortion + delta - D),
    lambda_{t+1} = lambda_t - rho_t (distortion + delta - D),

where delta is set each step to its closed-form minimizer
max(0, D - distortion + lambda_t/rho_t).  The same machinery trains the
task-aware variant (an extra weighted prediction loss in the encoder
objective) and fair classifiers (the "distortion" becomes the predictor's
expected loss, bounded by L, and the adversary reads the predictor's soft
output, optionally alongside the true label for equalized odds).

Every run is a pure function of (dataset, config): all randomness flows
from named substreams of the config seed, and each component owns its own
substream so that, e.g., training an extra target classifier at utility
weight zero reproduces the representation-mode trajectories bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset
from .encoders import AffineGaussianEncoder, FeedforwardEncoder, softplus_inv
from .nn import AdamState, MlpModel, adam_step, backward, cross_entropy, forward, softmax
from .numerics import RngState

__all__ = [
    "TrainConfig",
    "TrainResult",
    "encoder_objective_penalty",
    "encoder_objective_auglag",
    "auglag_slack",
    "train",
    "train_task_aware",
    "train_fair_classifier_eo",
    "make_affine_encoder",
    "one_hot",
]

# Final full-train-set distortion must come in under this multiple of the
# budget for a run to count as feasible (plus an absolute epsilon so that
# a D = 0 run with vestigial softplus noise is not rejected).
FEASIBILITY_FACTOR = 1.05
FEASIBILITY_ATOL = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one reproducible run."""

    distortion_bound: float  # D: mean squared l2 per sample (or per feature, see flag)
    iterations: int = 600  # T
    adversary_epochs: int = 5  # j inner ascent steps per outer iteration
    batch_size: int = 1000
    encoder_lr: float = 0.005
    adversary_lr: float = 0.005
    classifier_lr: float = 0.005
    rho0: float = 1.0
    rho_growth: float = 1.5
    rho_max: float = 1e4
    rho_period: int | None = None  # iterations between growth steps; default T // 20
    constraint: str = "penalty"  # or "augmented-lagrangian"
    squared_penalty: bool = True  # quadratic violation term; False: linear violation
    mode: str = "representation"  # "task-aware" | "fair-classifier" (CLI dispatch)
    utility_weight: float = 0.0  # lambda weighting the target loss in task-aware mode
    per_feature_distortion: bool = False
    encoder_inputs: str = "x"  # "sx": one-hot S is appended to the encoder input
    encoder_lr_decay: float = 1.0  # final/initial encoder step ratio, exponential in t
    expected_distortion: bool = False  # score the constraint on E[distortion] when exact
    seed: int = 0

    def __post_init__(self):
        if self.distortion_bound < 0:
            raise ValueError("distortion bound must be non-negative")
        if min(self.iterations, self.adversary_epochs, self.batch_size) < 1:
            raise ValueError("iterations, adversary_epochs, and batch_size must be >= 1")
        if self.rho0 <= 0 or self.rho_growth < 1:
            raise ValueError("need rho0 > 0 and growth factor >= 1")
        if self.utility_weight < 0:
            raise ValueError("utility weight must be non-negative")
        if self.constraint not in ("penalty", "augmented-lagrangian"):
            raise ValueError(f"unknown constraint method {self.constraint!r}")
        if self.mode not in ("representation", "task-aware", "fair-classifier"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.encoder_inputs not in ("x", "sx"):
            raise ValueError(f"unknown encoder input policy {self.encoder_inputs!r}")
        if not (0.0 < self.encoder_lr_decay <= 1.0):
            raise ValueError("encoder_lr_decay must lie in (0, 1]")

    def rho_at(self, t: int) -> float:
        period = self.rho_period or max(1, self.iterations // 20)
        return min(self.rho_max, self.rho0 * self.rho_growth ** (t // period))

    def encoder_lr_at(self, t: int) -> float:
        # Exponential anneal of the encoder step; the shrinking step plays
        # the role of the line search in the alternating algorithm and keeps
        # the iterate from chattering across the constraint boundary.
        if self.encoder_lr_decay == 1.0 or self.iterations == 1:
            return self.encoder_lr
        return self.encoder_lr * self.encoder_lr_decay ** (t / (self.iterations - 1))


def encoder_objective_penalty(
    adv_loss: float,
    empirical_distortion: float,
    bound: float,
    rho: float,
    squared: bool = True,
) -> float:
    """Penalty-method encoder loss; equals -adv_loss on feasible points."""
    violation = max(0.0, empirical_distortion - bound)
    term = violation**2 if squared else violation
    return -adv_loss + rho * term


def encoder_objective_auglag(
    adv_loss: float,
    empirical_distortion: float,
    bound: float,
    rho: float,
    lam: float,
    slack: float,
):
    """Augmented-Lagrangian encoder loss and the post-step multiplier.

    Returns (loss, updated_lambda) for residual r = distortion + slack - bound:
    loss = -adv_loss + (rho/2) r^2 - lam r and lambda' = lam - rho r, so a
    zero residual leaves both the loss (-adv_loss) and multiplier unchanged.
    """
    if slack < 0:
        raise ValueError("slack must be non-negative")
    residual = empirical_distortion + slack - bound
    loss = -adv_loss + 0.5 * rho * residual**2 - lam * residual
    return loss, lam - rho * residual


def auglag_slack(empirical_distortion: float, bound: float, rho: float, lam: float) -> float:
    """Closed-form minimizer of the augmented term over the slack delta >= 0.

    With the sign conventions above the multiplier runs negative while the
    constraint is violated, so the unclipped minimizer is
    D - distortion + lambda/rho.
    """
    return max(0.0, bound - empirical_distortion + lam / rho)


@dataclass
class TrainResult:
    encoder: object
    adversary: MlpModel
    history: dict
    final_distortion: float
    final_adversary_loss: float  # adversary loss averaged over the last window
    classifier: MlpModel | None = None

    @property
    def feasible(self) -> bool:
        bound = self.history["distortion_bound"]
        return self.final_distortion <= FEASIBILITY_FACTOR * bound + FEASIBILITY_ATOL


def one_hot(labels: np.ndarray, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    k = n_classes or int(labels.max()) + 1
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def make_affine_encoder(dim: int, distortion_bound: float) -> AffineGaussianEncoder:
    """Affine encoder initialized at a feasible symmetric allocation.

    Starting just inside the budget (a uniform split at 95% scale) means
    the game only has to redistribute noise across coordinates instead of
    ramping total noise up from zero, which matters when the budget is
    orders of magnitude above the per-step movement of Adam.
    """
    if distortion_bound > 0:
        init = 0.95 * math.sqrt(distortion_bound / dim)
    else:
        init = 1e-4
    return AffineGaussianEncoder(dim, init_sigma_p=init)


def _distortion_and_grad(x_r, x, per_feature: bool):
    diffs = x_r - x
    scale = diffs.shape[0] * (diffs.shape[1] if per_feature else 1)
    return float((diffs**2).sum()) / scale, 2.0 * diffs / scale


def _constraint_terms(distortion, config, rho, lam):
    """Constraint contribution to the encoder loss, its d/d(distortion), and
    the updated multiplier (penalty method keeps lam at 0)."""
    bound = config.distortion_bound
    if config.constraint == "penalty":
        violation = max(0.0, distortion - bound)
        if config.squared_penalty:
            return rho * violation**2, 2.0 * rho * violation, 0.0
        return rho * violation, rho * (1.0 if violation > 0 else 0.0), 0.0
    slack = auglag_slack(distortion, bound, rho, lam)
    residual = distortion + slack - bound
    term = 0.5 * rho * residual**2 - lam * residual
    return term, rho * residual - lam, lam - rho * residual


def _encoder_sensitive_input(encoder, s, n_classes):
    if getattr(encoder, "n_sensitive", 0):
        return one_hot(s, n_classes)
    return None


def train(
    dataset: LabeledDataset,
    encoder,
    adversary: MlpModel,
    config: TrainConfig,
    target_classifier: MlpModel | None = None,
) -> TrainResult:
    """Run the alternating minimax loop of the representation game.

    Pass ``target_classifier`` (and a config with utility_weight lambda)
    to co-train a downstream predictor whose loss is added to the encoder
    objective; at lambda = 0 the encoder/adversary trajectories are
    identical to a run without the classifier.
    """
    x, s = dataset.x, dataset.s
    n = x.shape[0]
    if n < 1:
        raise ValueError("dataset is empty")
    if config.batch_size > n:
        raise ValueError(f"batch size {config.batch_size} exceeds dataset size {n}")
    if target_classifier is not None and dataset.y is None:
        raise ValueError("co-training a target classifier requires Y labels")
    if config.expected_distortion and not hasattr(encoder, "expected_distortion_with_grads"):
        raise ValueError("expected_distortion requires an encoder with a closed-form distortion")

    n_s = int(s.max()) + 1
    root = RngState(config.seed)
    batch_rng = root.child("minibatch")
    noise_rng = root.child("encoder-noise")
    cls_rng = root.child("classifier")  # reserved; keeps streams stable

    adv_state = AdamState(adversary.parameters(), lr=config.adversary_lr)
    enc_state = AdamState(encoder.parameters(), lr=config.encoder_lr)
    cls_state = (
        AdamState(target_classifier.parameters(), lr=config.classifier_lr)
        if target_classifier is not None
        else None
    )

    columns = ("iteration", "adversary_loss", "encoder_loss", "distortion", "rho", "lambda")
    rows = []
    lam = 0.0
    for t in range(config.iterations):
        try:
            rho = config.rho_at(t)
            idx = batch_rng.integers(0, n, config.batch_size)
            xb, sb = x[idx], s[idx]
            s_in = _encoder_sensitive_input(encoder, sb, n_s)
            x_r, enc_cache = encoder.encode(xb, noise_rng, sensitive_onehot=s_in, training=True)

            # Inner maximization: j ascent epochs on the fixed encoded batch.
            for _ in range(config.adversary_epochs):
                logits, cache = forward(adversary, x_r, training=True)
                adv_loss, dlogits = cross_entropy(logits, sb)
                grads, _ = backward(adversary, cache, dlogits)
                adam_step(adversary.parameters(), grads, adv_state)

            # Optional cooperative target classifier (task-aware mode).
            if target_classifier is not None:
                yb = dataset.y[idx]
                y_logits, y_cache = forward(target_classifier, x_r, training=True)
                y_loss, y_dlogits = cross_entropy(y_logits, yb)
                y_grads, _ = backward(target_classifier, y_cache, y_dlogits)
                adam_step(target_classifier.parameters(), y_grads, cls_state)

            # Encoder step against the freshly updated adversary.
            logits, adv_cache = forward(adversary, x_r, training=True)
            adv_loss, dlogits = cross_entropy(logits, sb)
            _, dxr = backward(adversary, adv_cache, -dlogits)

            distortion, ddist_dxr = _distortion_and_grad(x_r, xb, config.per_feature_distortion)
            if config.expected_distortion:
                dist_c, dist_grads = encoder.expected_distortion_with_grads(
                    config.per_feature_distortion
                )
            else:
                dist_c, dist_grads = distortion, None
            term, dterm_ddist, lam = _constraint_terms(dist_c, config, rho, lam)
            encoder_loss = -adv_loss + term
            if dist_grads is None:
                dxr = dxr + dterm_ddist * ddist_dxr

            if target_classifier is not None and config.utility_weight != 0.0:
                y_logits, y_cache = forward(target_classifier, x_r, training=True)
                y_loss, y_dlogits = cross_entropy(y_logits, dataset.y[idx])
                _, y_dxr = backward(target_classifier, y_cache, y_dlogits)
                encoder_loss += config.utility_weight * y_loss
                dxr = dxr + config.utility_weight * y_dxr

            if not math.isfinite(encoder_loss):
                raise FloatingPointError("non-finite encoder loss")
            enc_grads = encoder.backward(enc_cache, dxr)
            if dist_grads is not None:
                enc_grads = [g + dterm_ddist * pg for g, pg in zip(enc_grads, dist_grads)]
            enc_state.lr = config.encoder_lr_at(t)
            adam_step(encoder.parameters(), enc_grads, enc_state)
        except FloatingPointError as exc:
            raise FloatingPointError(f"training diverged at iteration {t}: {exc}") from exc
        rows.append((t, adv_loss, encoder_loss, distortion, rho, lam))

    history = {name: np.array([r[i] for r in rows]) for i, name in enumerate(columns)}
    history["distortion_bound"] = config.distortion_bound

    s_in = _encoder_sensitive_input(encoder, s, n_s)
    x_r_full, _ = encoder.encode(x, root.child("final-eval"), sensitive_onehot=s_in, training=False)
    final_distortion, _ = _distortion_and_grad(x_r_full, x, config.per_feature_distortion)
    window = max(1, config.iterations // 10)
    final_adv = float(history["adversary_loss"][-window:].mean())
    return TrainResult(
        encoder=encoder,
        adversary=adversary,
        history=history,
        final_distortion=final_distortion,
        final_adversary_loss=final_adv,
        classifier=target_classifier,
    )


def train_task_aware(
    dataset: LabeledDataset,
    encoder,
    adversary: MlpModel,
    target_classifier: MlpModel,
    config: TrainConfig,
) -> TrainResult:
    """Representation game plus a weighted downstream-prediction loss."""
    if dataset.y is None:
        raise ValueError("task-aware training requires Y labels")
    return train(dataset, encoder, adversary, config, target_classifier=target_classifier)


def _softmax_input_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    # Jacobian-vector product of softmax: dL/dlogits from dL/dprobs.
    inner = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def train_fair_classifier_eo(
    dataset: LabeledDataset,
    predictor: MlpModel,
    adversary: MlpModel,
    config: TrainConfig,
    loss_bound: float,
    adversary_sees_y: bool = True,
) -> TrainResult:
    """Train a fair predictor directly (no intermediate representation).

    The predictor's soft output is handed to the adversary -- concatenated
    with one-hot Y when ``adversary_sees_y`` (equalized odds), alone
    otherwise (demographic parity) -- and the predictor minimizes the
    negative adversary loss subject to its own expected prediction loss
    staying below ``loss_bound``, enforced with the same penalty /
    augmented-Lagrangian machinery as the distortion constraint.
    """
    if dataset.y is None:
        raise ValueError("fair-classifier training requires Y labels")
    x, s, y = dataset.x, dataset.s, dataset.y
    n = x.shape[0]
    if config.batch_size > n:
        raise ValueError(f"batch size {config.batch_size} exceeds dataset size {n}")
    n_y = int(y.max()) + 1

    cfg = replace(config, distortion_bound=loss_bound)
    root = RngState(cfg.seed)
    batch_rng = root.child("minibatch")
    adv_state = AdamState(adversary.parameters(), lr=cfg.adversary_lr)
    pred_state = AdamState(predictor.parameters(), lr=cfg.encoder_lr)

    columns = ("iteration", "adversary_loss", "encoder_loss", "distortion", "rho", "lambda")
    rows = []
    lam = 0.0
    y_onehot_all = one_hot(y, n_y)
    for t in range(cfg.iterations):
        rho = cfg.rho_at(t)
        idx = batch_rng.integers(0, n, cfg.batch_size)
        xb, sb, yb = x[idx], s[idx], y[idx]

        def adv_input(probs):
            if adversary_sees_y:
                return np.concatenate([probs, y_onehot_all[idx]], axis=1)
            return probs

        logits, pred_cache = forward(predictor, xb, training=True)
        probs = softmax(logits)

        for _ in range(cfg.adversary_epochs):
            a_logits, a_cache = forward(adversary, adv_input(probs), training=True)
            adv_loss, a_dlogits = cross_entropy(a_logits, sb)
            a_grads, _ = backward(adversary, a_cache, a_dlogits)
            adam_step(adversary.parameters(), a_grads, adv_state)

        a_logits, a_cache = forward(adversary, adv_input(probs), training=True)
        adv_loss, a_dlogits = cross_entropy(a_logits, sb)
        _, a_dinput = backward(adversary, a_cache, -a_dlogits)
        dprobs = a_dinput[:, : probs.shape[1]]

        pred_loss, pred_dlogits = cross_entropy(logits, yb)
        term, dterm_dloss, lam = _constraint_terms(pred_loss, cfg, rho, lam)
        total_dlogits = _softmax_input_grad(probs, dprobs) + dterm_dloss * pred_dlogits
        encoder_loss = -adv_loss + term
        if not math.isfinite(encoder_loss):
            raise FloatingPointError(f"training diverged at iteration {t}")
        p_grads, _ = backward(predictor, pred_cache, total_dlogits)
        pred_state.lr = cfg.encoder_lr_at(t)
        adam_step(predictor.parameters(), p_grads, pred_state)
        rows.append((t, adv_loss, encoder_loss, pred_loss, rho, lam))

    history = {name: np.array([r[i] for r in rows]) for i, name in enumerate(columns)}
    history["distortion_bound"] = loss_bound
    logits, _ = forward(predictor, x, training=False)
    final_loss, _ = cross_entropy(logits, y)
    window = max(1, cfg.iterations // 10)
    return TrainResult(
        encoder=predictor,
        adversary=adversary,
        history=history,
        final_distortion=final_loss,
        final_adversary_loss=float(history["adversary_loss"][-window:].mean()),
        classifier=predictor,
    )
