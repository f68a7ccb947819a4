"""Multi-objective query-to-model assignment.

Builds the per-(query, model) estimate matrix from profiles and predicted
item parameters, then maximizes

    sum over queries of  w_p * p - w_c * cost - w_t * latency

subject to one model per query and optional global budgets on total cost,
total latency, and mean accuracy.  Small instances are solved exactly by
branch-and-bound over per-query utility-sorted candidate lists; larger ones
fall back to a Lagrangian-relaxation heuristic (subgradient on the budget
multipliers, then greedy repair) that also reports a dual optimality-gap
bound.  Infeasibility is a result value, not an exception.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    TokenCounts,
    Tokenizer,
    complexity_score,
    count_input_tokens,
    estimate_cost,
    estimate_latency,
    estimate_output_length,
    get_tokenizer,
)
from .irt import ItemParams, predict_prob
from .registry import ModelProfile

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class PolicyWeights:
    w_p: float
    w_c: float
    w_t: float

    def __post_init__(self):
        if min(self.w_p, self.w_c, self.w_t) < 0:
            raise ValueError("policy weights must be >= 0")
        total = self.w_p + self.w_c + self.w_t
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"policy weights must sum to 1, got {total}")


POLICY_PRESETS = {
    "max-acc": PolicyWeights(0.8, 0.1, 0.1),
    "min-cost": PolicyWeights(0.1, 0.8, 0.1),
    "min-lat": PolicyWeights(0.1, 0.1, 0.8),
    "balanced": PolicyWeights(0.5, 0.3, 0.2),
}


@dataclass(frozen=True)
class GlobalConstraints:
    max_total_cost: float | None = None
    max_total_latency: float | None = None
    min_mean_accuracy: float | None = None

    def __post_init__(self):
        for name in ("max_total_cost", "max_total_latency"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.min_mean_accuracy is not None and not (0 <= self.min_mean_accuracy <= 1):
            raise ValueError("min_mean_accuracy must be in [0, 1]")

    def any_present(self) -> bool:
        return any(
            v is not None
            for v in (self.max_total_cost, self.max_total_latency, self.min_mean_accuracy)
        )


@dataclass(frozen=True)
class QueryModelEstimate:
    query_id: str
    model_id: str
    p: float
    cost: float
    latency: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p={self.p} outside [0, 1]")
        if self.cost < 0 or self.latency < 0:
            raise ValueError("cost and latency must be >= 0")


@dataclass
class Assignment:
    choices: dict[str, str]
    objective_value: float | None
    feasible: bool
    constraint_slack: dict[str, float] = field(default_factory=dict)
    solver: str = "exact"
    gap_bound: float | None = None  # heuristic only: dual bound minus achieved


@dataclass
class RewardReport:
    total_reward: float
    per_query: list[tuple[str, float]]
    weights: PolicyWeights


def utility(est: QueryModelEstimate, weights: PolicyWeights) -> float:
    return weights.w_p * est.p - weights.w_c * est.cost - weights.w_t * est.latency


def score_matrix(
    queries: list[tuple[str, ItemParams, str]],
    profiles: list[ModelProfile],
    tokenizers: dict[str, Tokenizer] | None = None,
) -> list[list[QueryModelEstimate]]:
    """Estimate (p, cost, latency) for every query x model pair.

    Returns one row per query, in input order, each row holding one estimate
    per profile in input order.  Pure in its inputs.
    """
    toks: dict[str, Tokenizer] = {}
    for prof in profiles:
        if prof.verbosity is None:
            raise ValueError(f"model {prof.model_id!r} has no verbosity table")
        if prof.latency is None:
            raise ValueError(f"model {prof.model_id!r} has no latency profile")
        try:
            toks[prof.model_id] = (
                tokenizers[prof.tokenizer_id] if tokenizers is not None
                else get_tokenizer(prof.tokenizer_id)
            )
        except KeyError:
            raise ValueError(
                f"model {prof.model_id!r}: unknown tokenizer {prof.tokenizer_id!r}"
            ) from None

    rows = []
    for query_id, item, text in queries:
        row = []
        for prof in profiles:
            p = predict_prob(prof.ability, item)
            s = complexity_score(item)
            out_len = estimate_output_length(prof.verbosity, s)
            in_len = count_input_tokens(toks[prof.model_id], text)
            cost = estimate_cost(prof.pricing, TokenCounts(in_len, out_len))
            lat = estimate_latency(prof.latency, out_len)
            row.append(QueryModelEstimate(query_id, prof.model_id, p, cost, lat))
        rows.append(row)
    return rows


def _group(estimates) -> dict[str, list[QueryModelEstimate]]:
    """Group a flat list or matrix by query, candidates sorted by model_id."""
    flat: list[QueryModelEstimate] = []
    for e in estimates:
        if isinstance(e, QueryModelEstimate):
            flat.append(e)
        else:
            flat.extend(e)
    groups: dict[str, list[QueryModelEstimate]] = {}
    for e in flat:
        groups.setdefault(e.query_id, []).append(e)
    for qid in groups:
        groups[qid].sort(key=lambda e: e.model_id)
    return groups


def min_max_normalize(estimates) -> list[QueryModelEstimate]:
    """Optional preprocessing: min-max scale p, cost, latency over the batch.

    Puts probability, currency and seconds on a common [0, 1] footing before
    weighting; off by default because budgets stay in raw units.
    """
    groups = _group(estimates)
    flat = [e for g in groups.values() for e in g]
    out = []
    fields = ("p", "cost", "latency")
    lo = {f: min(getattr(e, f) for e in flat) for f in fields}
    hi = {f: max(getattr(e, f) for e in flat) for f in fields}
    for e in flat:
        scaled = {}
        for f in fields:
            rng = hi[f] - lo[f]
            scaled[f] = (getattr(e, f) - lo[f]) / rng if rng > 0 else 0.0
        out.append(dataclasses.replace(e, p=scaled["p"], cost=scaled["cost"],
                                       latency=scaled["latency"]))
    return out


def route_unconstrained(estimates, weights: PolicyWeights,
                        normalize: bool = False) -> Assignment:
    """Per-query argmax of the weighted utility; ties go to the lowest model_id."""
    groups = _group(estimates)
    if not groups:
        raise ValueError("no estimates to route")
    if normalize:
        groups = _group(min_max_normalize(estimates))
    choices = {}
    total = 0.0
    for qid, cands in groups.items():
        if not cands:
            raise ValueError(f"query {qid!r} has no model estimates")
        # candidates are model_id-sorted and max() keeps the first maximal
        # element, so ties resolve to the lowest model_id
        best = max(cands, key=lambda e: utility(e, weights))
        choices[qid] = best.model_id
        total += utility(best, weights)
    return Assignment(choices=choices, objective_value=total, feasible=True,
                      constraint_slack={}, solver="exact")


def _instance(groups, weights: PolicyWeights, util_groups=None):
    """Per-query candidate tuples sorted by utility desc, model_id asc."""
    inst = []
    qids = list(groups)
    for qid in qids:
        cands = []
        for j, e in enumerate(groups[qid]):
            u = utility(util_groups[qid][j] if util_groups else e, weights)
            cands.append((u, e.model_id, e.p, e.cost, e.latency))
        cands.sort(key=lambda t: (-t[0], t[1]))
        inst.append(cands)
    return qids, inst


def _slack(constraints: GlobalConstraints, n_q: int, total_cost, total_lat, total_p):
    slack = {}
    if constraints.max_total_cost is not None:
        slack["max_total_cost"] = constraints.max_total_cost - total_cost
    if constraints.max_total_latency is not None:
        slack["max_total_latency"] = constraints.max_total_latency - total_lat
    if constraints.min_mean_accuracy is not None:
        slack["min_mean_accuracy"] = total_p - n_q * constraints.min_mean_accuracy
    return slack


def _feasible(constraints: GlobalConstraints, n_q: int, total_cost, total_lat, total_p) -> bool:
    if constraints.max_total_cost is not None and total_cost > constraints.max_total_cost + FEAS_TOL:
        return False
    if (constraints.max_total_latency is not None
            and total_lat > constraints.max_total_latency + FEAS_TOL):
        return False
    if (constraints.min_mean_accuracy is not None
            and total_p < n_q * constraints.min_mean_accuracy - FEAS_TOL):
        return False
    return True


def _branch_and_bound(qids, inst, constraints: GlobalConstraints) -> Assignment:
    n = len(qids)
    # suffix bounds over queries k..n-1
    suf_max_u = np.zeros(n + 1)
    suf_min_c = np.zeros(n + 1)
    suf_min_t = np.zeros(n + 1)
    suf_max_p = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        suf_max_u[k] = suf_max_u[k + 1] + max(c[0] for c in inst[k])
        suf_min_c[k] = suf_min_c[k + 1] + min(c[3] for c in inst[k])
        suf_min_t[k] = suf_min_t[k + 1] + min(c[4] for c in inst[k])
        suf_max_p[k] = suf_max_p[k + 1] + max(c[2] for c in inst[k])

    cmax = constraints.max_total_cost
    tmax = constraints.max_total_latency
    pmin_total = (
        constraints.min_mean_accuracy * n if constraints.min_mean_accuracy is not None else None
    )

    best_value = -np.inf
    best_pick: list[int] | None = None
    pick = [0] * n

    def dfs(k, util, cost, lat, acc):
        nonlocal best_value, best_pick
        if cmax is not None and cost + suf_min_c[k] > cmax + FEAS_TOL:
            return
        if tmax is not None and lat + suf_min_t[k] > tmax + FEAS_TOL:
            return
        if pmin_total is not None and acc + suf_max_p[k] < pmin_total - FEAS_TOL:
            return
        if util + suf_max_u[k] <= best_value + 1e-12:
            return
        if k == n:
            best_value = util
            best_pick = pick.copy()
            return
        for j, (u, _mid, p, c, t) in enumerate(inst[k]):
            pick[k] = j
            dfs(k + 1, util + u, cost + c, lat + t, acc + p)

    dfs(0, 0.0, 0.0, 0.0, 0.0)
    if best_pick is None:
        return Assignment(choices={}, objective_value=None, feasible=False, solver="exact")
    choices, tc, tt, tp = {}, 0.0, 0.0, 0.0
    for k, qid in enumerate(qids):
        u, mid, p, c, t = inst[k][best_pick[k]]
        choices[qid] = mid
        tc, tt, tp = tc + c, tt + t, tp + p
    return Assignment(
        choices=choices,
        objective_value=float(best_value),
        feasible=True,
        constraint_slack=_slack(constraints, n, tc, tt, tp),
        solver="exact",
    )


def _lagrangian_heuristic(qids, inst, constraints: GlobalConstraints,
                          iterations: int = 300) -> Assignment:
    n = len(qids)
    cmax = constraints.max_total_cost
    tmax = constraints.max_total_latency
    pmin_total = (
        constraints.min_mean_accuracy * n if constraints.min_mean_accuracy is not None else None
    )
    lam = np.zeros(3)  # multipliers for cost, latency, accuracy rows

    def relaxed_solve(l):
        picks, util, tc, tt, tp, relaxed = [], 0.0, 0.0, 0.0, 0.0, 0.0
        for k in range(n):
            scores = [u - l[0] * c - l[1] * t + l[2] * p for (u, _m, p, c, t) in inst[k]]
            j = int(np.argmax(scores))
            u, _m, p, c, t = inst[k][j]
            picks.append(j)
            util, tc, tt, tp = util + u, tc + c, tt + t, tp + p
            relaxed += scores[j]
        dual = relaxed
        if cmax is not None:
            dual += l[0] * cmax
        if tmax is not None:
            dual += l[1] * tmax
        if pmin_total is not None:
            dual -= l[2] * pmin_total
        return picks, util, tc, tt, tp, dual

    best_dual = np.inf
    picks = None
    for it in range(1, iterations + 1):
        picks, util, tc, tt, tp, dual = relaxed_solve(lam)
        best_dual = min(best_dual, dual)
        g = np.zeros(3)
        if cmax is not None:
            g[0] = tc - cmax
        if tmax is not None:
            g[1] = tt - tmax
        if pmin_total is not None:
            g[2] = pmin_total - tp
        if np.all(g <= FEAS_TOL):
            break
        step = 1.0 / (np.linalg.norm(g) * np.sqrt(it) + 1e-12)
        lam = np.maximum(lam + step * g, 0.0)

    def totals(pk):
        u = sum(inst[k][pk[k]][0] for k in range(n))
        c = sum(inst[k][pk[k]][3] for k in range(n))
        t = sum(inst[k][pk[k]][4] for k in range(n))
        p = sum(inst[k][pk[k]][2] for k in range(n))
        return u, c, t, p

    # greedy repair: fix the most violated row by the cheapest utility loss
    util, tc, tt, tp = totals(picks)
    for _ in range(10 * n):
        viol = []
        if cmax is not None and tc > cmax + FEAS_TOL:
            viol.append("cost")
        if tmax is not None and tt > tmax + FEAS_TOL:
            viol.append("latency")
        if pmin_total is not None and tp < pmin_total - FEAS_TOL:
            viol.append("accuracy")
        if not viol:
            break
        target = viol[0]
        best_move, best_ratio = None, None
        for k in range(n):
            cur = inst[k][picks[k]]
            for j, cand in enumerate(inst[k]):
                if j == picks[k]:
                    continue
                if target == "cost":
                    gain = cur[3] - cand[3]
                elif target == "latency":
                    gain = cur[4] - cand[4]
                else:
                    gain = cand[2] - cur[2]
                if gain <= 0:
                    continue
                loss = cur[0] - cand[0]
                ratio = loss / gain
                if best_ratio is None or ratio < best_ratio:
                    best_ratio, best_move = ratio, (k, j)
        if best_move is None:
            return Assignment(choices={}, objective_value=None, feasible=False,
                              solver="heuristic", gap_bound=None)
        k, j = best_move
        picks[k] = j
        util, tc, tt, tp = totals(picks)

    # local improvement: single-query switches that keep feasibility
    improved = True
    while improved:
        improved = False
        for k in range(n):
            cur = inst[k][picks[k]]
            for j, cand in enumerate(inst[k]):
                if cand[0] <= cur[0]:
                    continue
                nc, nt, npp = tc - cur[3] + cand[3], tt - cur[4] + cand[4], tp - cur[2] + cand[2]
                if _feasible(constraints, n, nc, nt, npp):
                    picks[k] = j
                    util, tc, tt, tp = totals(picks)
                    improved = True
                    break
            if improved:
                break

    if not _feasible(constraints, n, tc, tt, tp):
        return Assignment(choices={}, objective_value=None, feasible=False,
                          solver="heuristic", gap_bound=None)
    choices = {qid: inst[k][picks[k]][1] for k, qid in enumerate(qids)}
    return Assignment(
        choices=choices,
        objective_value=float(util),
        feasible=True,
        constraint_slack=_slack(constraints, n, tc, tt, tp),
        solver="heuristic",
        gap_bound=float(max(best_dual - util, 0.0)),
    )


def route_constrained(
    estimates,
    weights: PolicyWeights,
    constraints: GlobalConstraints | None = None,
    exact_threshold: int = 4096,
    normalize: bool = False,
) -> Assignment:
    """Budget-aware assignment; exact below `exact_threshold` total pairs.

    Budgets always apply to raw cost/latency/accuracy, even when the
    objective is min-max normalized.
    """
    constraints = constraints or GlobalConstraints()
    groups = _group(estimates)
    if not groups:
        raise ValueError("no estimates to route")
    for qid, cands in groups.items():
        if not cands:
            raise ValueError(f"query {qid!r} has no model estimates")
    if not constraints.any_present():
        return route_unconstrained(estimates, weights, normalize=normalize)

    util_groups = _group(min_max_normalize(estimates)) if normalize else None
    qids, inst = _instance(groups, weights, util_groups)
    n_pairs = sum(len(c) for c in inst)
    if n_pairs <= exact_threshold:
        return _branch_and_bound(qids, inst, constraints)
    return _lagrangian_heuristic(qids, inst, constraints)


def total_reward(
    assignment: Assignment,
    observed: dict[str, tuple[float, float, float]],
    weights: PolicyWeights,
) -> RewardReport:
    """Evaluation-time reward from observed (accuracy, cost, latency) triples."""
    per_query = []
    for qid in assignment.choices:
        if qid not in observed:
            raise KeyError(f"no observation for query {qid!r}")
        acc, cost, lat = observed[qid]
        per_query.append((qid, weights.w_p * acc - weights.w_c * cost - weights.w_t * lat))
    return RewardReport(
        total_reward=float(sum(v for _, v in per_query)),
        per_query=per_query,
        weights=weights,
    )


def assignment_to_csv(assignment: Assignment, estimates, weights: PolicyWeights) -> str:
    """CSV export: query_id, model_id, p, cost, latency, utility."""
    groups = _group(estimates)
    lines = ["query_id,model_id,p,cost,latency,utility"]
    for qid, mid in assignment.choices.items():
        est = next(e for e in groups[qid] if e.model_id == mid)
        lines.append(
            f"{qid},{mid},{est.p!r},{est.cost!r},{est.latency!r},{utility(est, weights)!r}"
        )
    return "\n".join(lines) + "\n"
