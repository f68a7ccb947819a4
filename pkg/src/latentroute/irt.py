"""Multidimensional two-parameter logistic response model.

A model u and an item i interact through

    P(correct) = sigmoid(alpha_i . (theta_u - b_i))

with ability theta_u, discrimination alpha_i >= 0 and difficulty b_i all
living in the same D-dimensional latent space.  This module fits the full
(model x item) score matrix by MAP under Gaussian priors and re-estimates a
single new model's theta from a handful of anchor observations.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, UnknownItemError

PROB_EPS = 1e-7  # BCE probability clamp


@dataclass(frozen=True)
class LatentAbility:
    model_id: str
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if not np.all(np.isfinite(self.theta)):
            raise ValueError(f"theta for {self.model_id!r} contains non-finite values")


@dataclass(frozen=True)
class ItemParams:
    item_id: str
    alpha: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.alpha.shape != self.b.shape:
            raise DimensionMismatch(self.alpha.size, self.b.size, f"item {self.item_id!r} alpha/b")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.b))):
            raise ValueError(f"item {self.item_id!r} has non-finite parameters")
        if np.any(self.alpha < 0):
            raise ValueError(f"item {self.item_id!r} has negative discrimination")


@dataclass
class ResponseMatrix:
    """Dense graded-score matrix with a missing-cell mask.

    scores[m, i] is the graded correctness of model `models[m]` on item
    `items[i]`; mask[m, i] is True where a score is present.
    """

    models: list[str]
    items: list[str]
    scores: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        m, p = len(self.models), len(self.items)
        if self.scores.shape != (m, p) or self.mask.shape != (m, p):
            raise ValueError(
                f"matrix shape {self.scores.shape} does not match {m} models x {p} items"
            )
        present = self.scores[self.mask]
        if present.size and (present.min() < 0.0 or present.max() > 1.0):
            raise ValueError("present scores must lie in [0, 1]")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResponseMatrix":
        """Read the CSV interchange format.

        First column model_id, header row item_ids, empty cells = missing.
        """
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ValueError(f"{path}: empty response matrix file")
        header = lines[0].split(",")
        items = [h.strip() for h in header[1:]]
        models, rows, masks = [], [], []
        for ln in lines[1:]:
            if not ln.strip():
                continue
            cells = ln.split(",")
            models.append(cells[0].strip())
            vals = [c.strip() for c in cells[1:]]
            if len(vals) != len(items):
                raise ValueError(f"{path}: row {cells[0]!r} has {len(vals)} cells, want {len(items)}")
            rows.append([float(v) if v else 0.0 for v in vals])
            masks.append([bool(v) for v in vals])
        return cls(models, items, np.array(rows, dtype=float), np.array(masks, dtype=bool))

    def to_csv(self, path: str | Path) -> None:
        out = ["model_id," + ",".join(self.items)]
        for m, row_ok, row in zip(self.models, self.mask, self.scores):
            cells = [repr(float(v)) if ok else "" for ok, v in zip(row_ok, row)]
            out.append(m + "," + ",".join(cells))
        Path(path).write_text("\n".join(out) + "\n")


@dataclass
class CalibrationConfig:
    D: int = 3
    epochs: int = 3000
    learning_rate: float = 0.1
    lr_decay: float = 0.99  # applied once per 100 epochs
    prior_mean: np.ndarray | None = None  # defaults to zeros(D)
    prior_precision: float = 1.0
    seed: int = 0
    grad_tol: float = 1e-8  # first-order stop for profiling

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr_decay must be in (0, 1]")
        if self.prior_precision <= 0:
            raise ValueError("prior_precision must be > 0")
        if self.prior_mean is None:
            self.prior_mean = np.zeros(self.D)
        self.prior_mean = np.asarray(self.prior_mean, dtype=float)
        if self.prior_mean.shape != (self.D,):
            raise DimensionMismatch(self.D, self.prior_mean.size, "prior_mean")


@dataclass
class CalibratedSpace:
    D: int
    abilities: dict[str, LatentAbility]
    items: dict[str, ItemParams]
    fit_report: dict

    def to_json(self) -> dict:
        return {
            "D": self.D,
            "items": {
                i: {"alpha": p.alpha.tolist(), "b": p.b.tolist()} for i, p in self.items.items()
            },
            "abilities": {m: a.theta.tolist() for m, a in self.abilities.items()},
            "fit_report": self.fit_report,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CalibratedSpace":
        return cls(
            D=int(doc["D"]),
            abilities={m: LatentAbility(m, np.array(t)) for m, t in doc["abilities"].items()},
            items={
                i: ItemParams(i, np.array(p["alpha"]), np.array(p["b"]))
                for i, p in doc["items"].items()
            },
            fit_report=dict(doc.get("fit_report", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "CalibratedSpace":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ProfilingObservation:
    item_id: str
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def bce(y, p):
    """Elementwise binary cross-entropy with the documented clamp."""
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def predict_prob(ability: LatentAbility, item: ItemParams) -> float:
    """Success probability sigmoid(alpha . (theta - b)), strictly inside (0, 1)."""
    if ability.theta.size != item.alpha.size:
        raise DimensionMismatch(item.alpha.size, ability.theta.size,
                                f"ability {ability.model_id!r} vs item {item.item_id!r}")
    z = float(item.alpha @ (ability.theta - item.b))
    p = float(sigmoid(z))
    return min(max(p, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))


def _cell_logits(theta, alpha, b):
    # z[m, i] = alpha_i . (theta_m - b_i), via one matmul and a per-item offset
    return theta @ alpha.T - np.sum(alpha * b, axis=1)[None, :]


def _map_loss(theta, b, raw_alpha, scores, mask, cfg: CalibrationConfig) -> float:
    alpha = softplus(raw_alpha)
    p = sigmoid(_cell_logits(theta, alpha, b))
    data = float(np.sum(bce(scores, p)[mask]))
    prior = 0.5 * cfg.prior_precision * float(np.sum((theta - cfg.prior_mean) ** 2))
    prior += 0.5 * float(np.sum(b**2)) + 0.5 * float(np.sum(raw_alpha**2))
    return data + prior


def _map_grads(theta, b, raw_alpha, scores, mask, cfg: CalibrationConfig):
    alpha = softplus(raw_alpha)
    p = sigmoid(_cell_logits(theta, alpha, b))
    g = np.where(mask, p - scores, 0.0)  # dBCE/dlogit
    col = g.sum(axis=0)
    g_theta = g @ alpha + cfg.prior_precision * (theta - cfg.prior_mean)
    g_b = -col[:, None] * alpha + b
    g_alpha = g.T @ theta - col[:, None] * b
    g_raw = g_alpha * sigmoid(raw_alpha) + raw_alpha  # softplus' = sigmoid
    return g_theta, g_b, g_raw


def fit_calibration(responses: ResponseMatrix, config: CalibrationConfig) -> CalibratedSpace:
    """MAP-fit abilities and item parameters to a graded score matrix.

    Full-batch Adam with the learning rate decayed by `lr_decay` every 100
    epochs.  The regularized loss (masked BCE + Gaussian prior penalties) is
    checkpointed every 100 epochs; if a checkpoint regresses, parameters are
    rolled back to the best seen and the step size halved, so the recorded
    checkpoint sequence is non-increasing.  Deterministic for a given seed.
    """
    if not responses.models or not responses.items:
        raise ValueError("empty response matrix")
    if not responses.mask.any():
        raise ValueError("response matrix has no present scores")
    per_model = responses.mask.sum(axis=1)
    per_item = responses.mask.sum(axis=0)
    if (per_model == 0).any():
        bad = responses.models[int(np.argmin(per_model))]
        raise ValueError(f"model {bad!r} has no present scores")
    if (per_item == 0).any():
        bad = responses.items[int(np.argmin(per_item))]
        raise ValueError(f"item {bad!r} has no present scores")

    M, P, D = len(responses.models), len(responses.items), config.D
    rng = np.random.default_rng(config.seed)
    theta = config.prior_mean + 0.1 * rng.standard_normal((M, D))
    b = 0.1 * rng.standard_normal((P, D))
    # start alpha near softplus(raw) = 1
    raw_alpha = np.log(np.expm1(1.0)) + 0.1 * rng.standard_normal((P, D))

    params = [theta, b, raw_alpha]
    m_adam = [np.zeros_like(x) for x in params]
    v_adam = [np.zeros_like(x) for x in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate

    scores, mask = responses.scores, responses.mask
    best_loss = _map_loss(*params, scores, mask, config)
    best_params = [x.copy() for x in params]
    checkpoints = [best_loss]

    for epoch in range(1, config.epochs + 1):
        grads = _map_grads(*params, scores, mask, config)
        for j, g in enumerate(grads):
            m_adam[j] = beta1 * m_adam[j] + (1 - beta1) * g
            v_adam[j] = beta2 * v_adam[j] + (1 - beta2) * g * g
            mh = m_adam[j] / (1 - beta1**epoch)
            vh = v_adam[j] / (1 - beta2**epoch)
            params[j] = params[j] - lr * mh / (np.sqrt(vh) + eps)

        if epoch % 100 == 0 or epoch == config.epochs:
            loss = _map_loss(*params, scores, mask, config)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite calibration loss at epoch {epoch}")
            if loss > best_loss:
                params = [x.copy() for x in best_params]
                m_adam = [np.zeros_like(x) for x in params]
                v_adam = [np.zeros_like(x) for x in params]
                lr *= 0.5
                loss = best_loss
            else:
                best_loss = loss
                best_params = [x.copy() for x in params]
            if epoch % 100 == 0:
                checkpoints.append(loss)
                lr *= config.lr_decay

    theta, b, raw_alpha = best_params
    alpha = softplus(raw_alpha)
    abilities = {m: LatentAbility(m, theta[i]) for i, m in enumerate(responses.models)}
    items = {it: ItemParams(it, alpha[i], b[i]) for i, it in enumerate(responses.items)}
    report = {
        "final_loss": best_loss,
        "epochs": config.epochs,
        "seed": config.seed,
        "checkpoints": checkpoints,
    }
    return CalibratedSpace(D=D, abilities=abilities, items=items, fit_report=report)


def profile_new_model(
    observations: list[ProfilingObservation],
    space: CalibratedSpace,
    config: CalibrationConfig,
    model_id: str = "new-model",
) -> LatentAbility:
    """Estimate a new model's theta from anchor scores, item params held fixed.

    Minimizes sum-BCE plus the Gaussian prior penalty, a strictly convex
    objective (logits are linear in theta), by accelerated gradient descent
    from the prior mean.  The step is the inverse of the exact smoothness
    bound 0.25 * lmax(A^T A) + prior_precision, so convergence to the
    first-order stop at `config.grad_tol` is guaranteed and deterministic.
    """
    if not observations:
        raise ValueError("no profiling observations")
    for obs in observations:
        if obs.item_id not in space.items:
            raise UnknownItemError(obs.item_id)
    A = np.array([space.items[o.item_id].alpha for o in observations])
    B = np.array([space.items[o.item_id].b for o in observations])
    y = np.array([o.score for o in observations])
    offs = np.sum(A * B, axis=1)
    mu, u = config.prior_mean, config.prior_precision

    def grad(th):
        p = sigmoid(A @ th - offs)
        return (p - y) @ A + u * (th - mu)

    lip = 0.25 * float(np.linalg.eigvalsh(A.T @ A)[-1]) + u
    step = 1.0 / lip
    theta = mu.astype(float).copy()
    look = theta
    momentum = 0.0
    for _ in range(max(config.epochs, 100) * 100):
        g = grad(look)
        new = look - step * g
        if float(np.linalg.norm(grad(new))) <= config.grad_tol:
            theta = new
            break
        # Nesterov momentum with gradient-sign restart
        if float(g @ (new - theta)) > 0:
            momentum = 0.0
        next_momentum = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
        look = new + ((momentum - 1.0) / next_momentum) * (new - theta)
        momentum = next_momentum
        theta = new
    return LatentAbility(model_id, theta)


def held_out_probability_mae(
    estimated: LatentAbility, truth: LatentAbility, items: list[ItemParams]
) -> float:
    """Mean |P(est) - P(true)| over the given items; the profiling quality metric."""
    errs = [abs(predict_prob(estimated, it) - predict_prob(truth, it)) for it in items]
    return float(np.mean(errs))


def replace_ability(space: CalibratedSpace, ability: LatentAbility) -> CalibratedSpace:
    """Functional insert/update of one ability; used by zero-shot onboarding."""
    if ability.theta.size != space.D:
        raise DimensionMismatch(space.D, ability.theta.size, f"ability {ability.model_id!r}")
    abilities = dict(space.abilities)
    abilities[ability.model_id] = ability
    return dataclasses.replace(space, abilities=abilities)
