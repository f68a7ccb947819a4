"""Greedy D-optimal anchor selection over item discrimination vectors.

The informativeness of a candidate anchor set is the log-determinant of the
accumulated discrimination matrix eps*I + sum(alpha_i alpha_i^T).  Greedy
forward selection evaluates each candidate's rank-one gain in O(D^2) via the
matrix determinant lemma and maintains the running inverse with
Sherman-Morrison updates.  Selection deliberately reads only discrimination
vectors: the ability-weighted Fisher information is provided separately for
diagnostics, not used for picking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .irt import ItemParams, LatentAbility, predict_prob


@dataclass
class InformationState:
    matrix: np.ndarray
    inverse: np.ndarray
    log_det: float
    selected: list[str]

    def check(self, atol: float = 1e-6) -> None:
        """Debug-mode consistency check of the incrementally maintained state."""
        D = self.matrix.shape[0]
        if not np.allclose(self.matrix, self.matrix.T, atol=1e-9):
            raise AssertionError("information matrix drifted from symmetry")
        if not np.allclose(self.matrix @ self.inverse, np.eye(D), atol=atol):
            raise AssertionError("inverse drifted from dense inversion")
        sign, logdet = np.linalg.slogdet(self.matrix)
        if sign <= 0 or abs(logdet - self.log_det) > atol * max(1.0, abs(logdet)):
            raise AssertionError("log_det drifted from dense recomputation")


@dataclass
class AnchorSet:
    item_ids: list[str]
    gains: list[float]
    epsilon: float
    D: int

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "D": self.D,
            "anchors": [{"item_id": i, "gain": g} for i, g in zip(self.item_ids, self.gains)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AnchorSet":
        anchors = doc["anchors"]
        return cls(
            item_ids=[a["item_id"] for a in anchors],
            gains=[float(a["gain"]) for a in anchors],
            epsilon=float(doc["epsilon"]),
            D=int(doc["D"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "AnchorSet":
        return cls.from_json(json.loads(Path(path).read_text()))

    def gain_curve_csv(self) -> str:
        lines = ["step,item_id,gain"]
        lines += [f"{k},{i},{g!r}" for k, (i, g) in enumerate(zip(self.item_ids, self.gains))]
        return "\n".join(lines) + "\n"


def fisher_information(items: list[ItemParams], ability: LatentAbility) -> np.ndarray:
    """Ability-weighted information sum p(1-p) alpha alpha^T over the items."""
    D = ability.theta.size
    info = np.zeros((D, D))
    for item in items:
        if item.alpha.size != D:
            raise DimensionMismatch(D, item.alpha.size, f"item {item.item_id!r}")
        p = predict_prob(ability, item)
        info += p * (1.0 - p) * np.outer(item.alpha, item.alpha)
    return info


def marginal_gain(state: InformationState, item: ItemParams) -> float:
    """log det(M + alpha alpha^T) - log det(M), by the determinant lemma."""
    D = state.matrix.shape[0]
    if item.alpha.size != D:
        raise DimensionMismatch(D, item.alpha.size, f"item {item.item_id!r}")
    quad = float(item.alpha @ state.inverse @ item.alpha)
    return float(np.log1p(quad))


def initial_state(D: int, epsilon: float) -> InformationState:
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return InformationState(
        matrix=epsilon * np.eye(D),
        inverse=np.eye(D) / epsilon,
        log_det=D * float(np.log(epsilon)),
        selected=[],
    )


def apply_selection(state: InformationState, item: ItemParams) -> InformationState:
    """Rank-one update of matrix, inverse (Sherman-Morrison) and log-det."""
    a = item.alpha
    inv_a = state.inverse @ a
    denom = 1.0 + float(a @ inv_a)
    new_inv = state.inverse - np.outer(inv_a, inv_a) / denom
    new_inv = 0.5 * (new_inv + new_inv.T)  # keep symmetric under roundoff
    return InformationState(
        matrix=state.matrix + np.outer(a, a),
        inverse=new_inv,
        log_det=state.log_det + float(np.log(denom)),
        selected=state.selected + [item.item_id],
    )


def select_anchors(
    items: list[ItemParams], N: int, epsilon: float = 1e-6, debug: bool = False
) -> AnchorSet:
    """Greedy forward D-optimal selection of N anchors.

    At each step picks the unselected item maximizing the log-det gain,
    breaking exact ties by ascending item_id; the result is therefore
    invariant to input ordering.
    """
    if N > len(items):
        raise ValueError(f"requested {N} anchors from only {len(items)} items")
    if N < 1:
        raise ValueError("N must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    items = sorted(items, key=lambda it: it.item_id)
    D = items[0].alpha.size
    for it in items:
        if it.alpha.size != D:
            raise DimensionMismatch(D, it.alpha.size, f"item {it.item_id!r}")

    A = np.array([it.alpha for it in items])  # (P, D), id-sorted
    state = initial_state(D, epsilon)
    remaining = np.ones(len(items), dtype=bool)
    ids, gains = [], []
    for _ in range(N):
        V = A @ state.inverse  # (P, D)
        quad = np.einsum("pd,pd->p", V, A)
        g = np.log1p(quad)
        g[~remaining] = -np.inf
        pick = int(np.argmax(g))  # first occurrence = lowest item_id on ties
        remaining[pick] = False
        ids.append(items[pick].item_id)
        gains.append(float(g[pick]))
        state = apply_selection(state, items[pick])
        if debug:
            state.check()
    return AnchorSet(item_ids=ids, gains=gains, epsilon=epsilon, D=D)


def subset_log_det(items: list[ItemParams], epsilon: float) -> float:
    """Dense log det(eps*I + sum alpha alpha^T); the enumeration oracle."""
    D = items[0].alpha.size if items else 0
    M = epsilon * np.eye(D)
    for it in items:
        M += np.outer(it.alpha, it.alpha)
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise FloatingPointError("non-PD information matrix")
    return float(logdet)
