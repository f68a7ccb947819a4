"""Query-to-latent-coordinate predictor.

Maps raw query text to predicted (discrimination, difficulty) vectors.  The
network fuses a semantic embedding stream (with a residual projection) and an
affine-projected structural stream through a shared ReLU trunk.  Difficulty
is predicted as a residual around the training-set mean difficulty vector;
discrimination is assembled from per-cluster expert heads (dimensions grouped
by inter-dimensional correlation) and passed through softplus so predictions
stay in the nonnegative range the response model expects.

Everything is plain numpy with hand-written backprop, which keeps training
deterministic and lets tests check analytic gradients against finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .features import STRUCTURAL_DIM, FeatureStandardizer, extract_structural_features
from .embeddings import HASH_DIM, hash_embedding
from .irt import CalibratedSpace, softplus, sigmoid


@dataclass(frozen=True)
class FeatureVector:
    semantic: np.ndarray
    structural: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "semantic", np.asarray(self.semantic, dtype=float))
        object.__setattr__(self, "structural", np.asarray(self.structural, dtype=float))
        if self.structural.size != STRUCTURAL_DIM:
            raise DimensionMismatch(STRUCTURAL_DIM, self.structural.size, "structural features")
        if not (np.all(np.isfinite(self.semantic)) and np.all(np.isfinite(self.structural))):
            raise ValueError("feature vector contains non-finite values")


@dataclass
class ClusterAssignment:
    clusters: list[list[int]]  # disjoint groups covering 0..D-1, each sorted
    method_report: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = sorted(d for g in self.clusters for d in g)
        if not self.clusters or any(not g for g in self.clusters):
            raise ValueError("clusters must be non-empty")
        if seen != list(range(len(seen))):
            raise ValueError("clusters must partition 0..D-1")

    @property
    def D(self) -> int:
        return sum(len(g) for g in self.clusters)


def cluster_dimensions(item_alphas: np.ndarray, C: int) -> ClusterAssignment:
    """Group latent dimensions by average-linkage clustering on 1 - |corr|.

    Constant columns have undefined correlation; they are treated as
    uncorrelated (distance 1) and listed in the method report.  Merge ties
    resolve toward the pair containing the lowest dimension index.
    """
    X = np.asarray(item_alphas, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an items x D matrix with at least 2 items")
    D = X.shape[1]
    if not (1 <= C <= D):
        raise ValueError(f"C must be in [1, {D}], got {C}")

    std = X.std(axis=0)
    constant = [int(d) for d in np.where(std < 1e-12)[0]]
    Xc = X - X.mean(axis=0)
    denom = np.outer(std, std)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (Xc.T @ Xc) / (X.shape[0] * denom)
    corr[~np.isfinite(corr)] = 0.0
    dist = 1.0 - np.abs(corr)
    np.fill_diagonal(dist, 0.0)

    groups: list[list[int]] = [[d] for d in range(D)]
    merges = []
    while len(groups) > C:
        best = None
        for a in range(len(groups)):
            for bidx in range(a + 1, len(groups)):
                pair_d = float(np.mean([dist[i, j] for i in groups[a] for j in groups[bidx]]))
                key = (pair_d, groups[a][0], groups[bidx][0])
                if best is None or key < best[0]:
                    best = (key, a, bidx)
        key, a, bidx = best
        merged = sorted(groups[a] + groups[bidx])
        merges.append({"merged": merged, "distance": key[0]})
        groups = [g for k, g in enumerate(groups) if k not in (a, bidx)] + [merged]
        groups.sort(key=lambda g: g[0])
    groups.sort(key=lambda g: g[0])
    report = {
        "distance": "1 - |pearson|",
        "constant_dims": constant,
        "merges": merges,
    }
    return ClusterAssignment(clusters=groups, method_report=report)


@dataclass
class PredictorModel:
    d_sem: int
    D: int
    clusters: ClusterAssignment
    mean_b: np.ndarray
    params: dict[str, np.ndarray]
    standardizer: FeatureStandardizer
    trunk_widths: tuple[int, int]
    head_width: int
    loss_history: list[float] = field(default_factory=list)

    @property
    def C(self) -> int:
        return len(self.clusters.clusters)

    def to_json(self) -> dict:
        return {
            "d_sem": self.d_sem,
            "D": self.D,
            "trunk_widths": list(self.trunk_widths),
            "head_width": self.head_width,
            "clusters": self.clusters.clusters,
            "cluster_report": self.clusters.method_report,
            "mean_b": self.mean_b.tolist(),
            "standardizer": self.standardizer.to_json(),
            "params": {
                k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                for k, v in self.params.items()
            },
            "loss_history": self.loss_history,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PredictorModel":
        params = {
            k: np.array(v["data"], dtype=float).reshape(v["shape"])
            for k, v in doc["params"].items()
        }
        return cls(
            d_sem=int(doc["d_sem"]),
            D=int(doc["D"]),
            clusters=ClusterAssignment(
                clusters=[list(map(int, g)) for g in doc["clusters"]],
                method_report=doc.get("cluster_report", {}),
            ),
            mean_b=np.array(doc["mean_b"], dtype=float),
            params=params,
            standardizer=FeatureStandardizer.from_json(doc["standardizer"]),
            trunk_widths=tuple(doc["trunk_widths"]),
            head_width=int(doc["head_width"]),
            loss_history=[float(x) for x in doc.get("loss_history", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def init_model(
    d_sem: int,
    clusters: ClusterAssignment,
    mean_b: np.ndarray,
    standardizer: FeatureStandardizer,
    trunk_widths: tuple[int, int] = (128, 128),
    head_width: int = 64,
    seed: int = 0,
) -> PredictorModel:
    D = clusters.D
    rng = np.random.default_rng(seed)
    fused = d_sem + STRUCTURAL_DIM
    h1, h2 = trunk_widths

    def lin(n_out, n_in):
        return rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)

    params = {
        "W_se": lin(d_sem, d_sem) * 0.1,  # residual stream starts near identity map
        "W_st": lin(STRUCTURAL_DIM, STRUCTURAL_DIM),
        "b_st": np.zeros(STRUCTURAL_DIM),
        "W1": lin(h1, fused), "c1": np.zeros(h1),
        "W2": lin(h2, h1), "c2": np.zeros(h2),
        "Wd1": lin(head_width, h2), "cd1": np.zeros(head_width),
        "Wd2": lin(D, head_width) * 0.1, "cd2": np.zeros(D),
    }
    for c, group in enumerate(clusters.clusters):
        params[f"We1_{c}"] = lin(head_width, h2)
        params[f"ce1_{c}"] = np.zeros(head_width)
        params[f"We2_{c}"] = lin(len(group), head_width) * 0.1
        params[f"ce2_{c}"] = np.zeros(len(group))
    return PredictorModel(
        d_sem=d_sem, D=D, clusters=clusters, mean_b=np.asarray(mean_b, dtype=float),
        params=params, standardizer=standardizer,
        trunk_widths=(h1, h2), head_width=head_width,
    )


def _forward_batch(model: PredictorModel, X_se: np.ndarray, X_st: np.ndarray):
    """Batch forward pass; X_st must already be standardized.  Returns
    (alpha_hat, b_hat, cache) with every intermediate needed by backprop."""
    p = model.params
    U = X_se @ p["W_se"].T + X_se
    V = X_st @ p["W_st"].T + p["b_st"]
    H0 = np.concatenate([U, V], axis=1)
    Z1 = H0 @ p["W1"].T + p["c1"]
    H1 = np.maximum(Z1, 0.0)
    Z2 = H1 @ p["W2"].T + p["c2"]
    H2 = np.maximum(Z2, 0.0)

    Zd = H2 @ p["Wd1"].T + p["cd1"]
    Hd = np.maximum(Zd, 0.0)
    delta_b = Hd @ p["Wd2"].T + p["cd2"]
    b_hat = model.mean_b + delta_b

    raw = np.empty((X_se.shape[0], model.D))
    expert_cache = []
    for c, group in enumerate(model.clusters.clusters):
        Ze = H2 @ p[f"We1_{c}"].T + p[f"ce1_{c}"]
        He = np.maximum(Ze, 0.0)
        raw[:, group] = He @ p[f"We2_{c}"].T + p[f"ce2_{c}"]
        expert_cache.append((Ze, He))
    alpha_hat = softplus(raw)
    cache = (X_se, X_st, H0, Z1, H1, Z2, H2, Zd, Hd, raw, expert_cache)
    return alpha_hat, b_hat, cache


def forward(model: PredictorModel, features: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    """Predict (alpha_hat, b_hat) for one query; pure and deterministic."""
    if features.semantic.size != model.d_sem:
        raise DimensionMismatch(model.d_sem, features.semantic.size, "semantic features")
    X_se = features.semantic[None, :]
    X_st = model.standardizer.transform(features.structural[None, :])
    alpha_hat, b_hat, _ = _forward_batch(model, X_se, X_st)
    return alpha_hat[0], b_hat[0]


def loss_and_grads(
    model: PredictorModel,
    X_se: np.ndarray,
    X_st: np.ndarray,
    target_alpha: np.ndarray,
    target_b: np.ndarray,
    lam: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Multi-task loss MSE(b) + lam * MSE(alpha) and its analytic gradients."""
    p = model.params
    n = X_se.shape[0]
    alpha_hat, b_hat, cache = _forward_batch(model, X_se, X_st)
    (X_se, X_st, H0, Z1, H1, Z2, H2, Zd, Hd, raw, expert_cache) = cache

    diff_b = b_hat - target_b
    diff_a = alpha_hat - target_alpha
    scale = 1.0 / (n * model.D)
    loss = float(np.sum(diff_b**2) * scale + lam * np.sum(diff_a**2) * scale)

    g = {}
    d_bhat = 2.0 * scale * diff_b
    d_raw = 2.0 * lam * scale * diff_a * sigmoid(raw)  # softplus' = sigmoid

    # difficulty head
    g["Wd2"] = d_bhat.T @ Hd
    g["cd2"] = d_bhat.sum(axis=0)
    dHd = d_bhat @ p["Wd2"]
    dZd = dHd * (Zd > 0)
    g["Wd1"] = dZd.T @ H2
    g["cd1"] = dZd.sum(axis=0)
    dH2 = dZd @ p["Wd1"]

    # expert heads
    for c, group in enumerate(model.clusters.clusters):
        Ze, He = expert_cache[c]
        dRa = d_raw[:, group]
        g[f"We2_{c}"] = dRa.T @ He
        g[f"ce2_{c}"] = dRa.sum(axis=0)
        dHe = dRa @ p[f"We2_{c}"]
        dZe = dHe * (Ze > 0)
        g[f"We1_{c}"] = dZe.T @ H2
        g[f"ce1_{c}"] = dZe.sum(axis=0)
        dH2 = dH2 + dZe @ p[f"We1_{c}"]

    # trunk
    dZ2 = dH2 * (Z2 > 0)
    g["W2"] = dZ2.T @ H1
    g["c2"] = dZ2.sum(axis=0)
    dH1 = dZ2 @ p["W2"]
    dZ1 = dH1 * (Z1 > 0)
    g["W1"] = dZ1.T @ H0
    g["c1"] = dZ1.sum(axis=0)
    dH0 = dZ1 @ p["W1"]

    # input projections
    dU = dH0[:, : model.d_sem]
    dV = dH0[:, model.d_sem :]
    g["W_se"] = dU.T @ X_se
    g["W_st"] = dV.T @ X_st
    g["b_st"] = dV.sum(axis=0)
    return loss, g


@dataclass(frozen=True)
class TrainingExample:
    query_id: str
    text: str
    target_alpha: np.ndarray
    target_b: np.ndarray
    embedding: np.ndarray | None = None  # precomputed semantic vector, else hashed from text


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    C: int = 4
    seed: int = 0
    lam: float = 1.0  # alpha-loss weight
    trunk_widths: tuple[int, int] = (128, 128)
    head_width: int = 64
    d_sem: int = HASH_DIM


def example_features(ex: TrainingExample, d_sem: int) -> tuple[np.ndarray, np.ndarray]:
    sem = ex.embedding if ex.embedding is not None else hash_embedding(ex.text, d_sem)
    return np.asarray(sem, dtype=float), extract_structural_features(ex.text)


def train(
    examples: list[TrainingExample],
    space: CalibratedSpace,
    config: TrainConfig,
) -> PredictorModel:
    """Fit the predictor on (text, alpha, b) supervision pairs.

    mean_b is the per-coordinate mean of the target difficulty vectors;
    dimension clusters come from the calibrated space's item discrimination
    matrix.  Mini-batch Adam with seeded shuffling, so results are
    reproducible for a given config.
    """
    if not examples:
        raise ValueError("no training examples")
    D = space.D
    for ex in examples:
        if ex.target_alpha.size != D or ex.target_b.size != D:
            raise DimensionMismatch(D, ex.target_alpha.size, f"targets for {ex.query_id!r}")

    feats = [example_features(ex, config.d_sem) for ex in examples]
    d_sem = feats[0][0].size
    X_se = np.array([f[0] for f in feats])
    raw_st = np.array([f[1] for f in feats])
    standardizer = FeatureStandardizer.fit(raw_st)
    X_st = standardizer.transform(raw_st)
    Ta = np.array([ex.target_alpha for ex in examples], dtype=float)
    Tb = np.array([ex.target_b for ex in examples], dtype=float)

    item_alphas = np.array([it.alpha for it in space.items.values()])
    C = min(config.C, D)
    clusters = cluster_dimensions(item_alphas, C)
    model = init_model(
        d_sem, clusters, mean_b=Tb.mean(axis=0), standardizer=standardizer,
        trunk_widths=config.trunk_widths, head_width=config.head_width, seed=config.seed,
    )

    rng = np.random.default_rng(config.seed)
    n = len(examples)
    bs = min(config.batch_size, n)
    m_adam = {k: np.zeros_like(v) for k, v in model.params.items()}
    v_adam = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            loss, grads = loss_and_grads(model, X_se[idx], X_st[idx], Ta[idx], Tb[idx],
                                         lam=config.lam)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {len(model.loss_history)}, "
                    f"batch {start // bs}"
                )
            epoch_loss += loss * len(idx)
            step += 1
            for k, gk in grads.items():
                m_adam[k] = beta1 * m_adam[k] + (1 - beta1) * gk
                v_adam[k] = beta2 * v_adam[k] + (1 - beta2) * gk * gk
                mh = m_adam[k] / (1 - beta1**step)
                vh = v_adam[k] / (1 - beta2**step)
                model.params[k] = model.params[k] - config.learning_rate * mh / (np.sqrt(vh) + eps)
        model.loss_history.append(epoch_loss / n)
    return model


def predict_item_params(model: PredictorModel, query_id: str, text: str,
                        embedding: np.ndarray | None = None):
    """Convenience wrapper: text -> FeatureVector -> predicted ItemParams."""
    from .irt import ItemParams

    sem = embedding if embedding is not None else hash_embedding(text, model.d_sem)
    feats = FeatureVector(semantic=sem, structural=extract_structural_features(text))
    alpha_hat, b_hat = forward(model, feats)
    return ItemParams(query_id, alpha_hat, b_hat)
