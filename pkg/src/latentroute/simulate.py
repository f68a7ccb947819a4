"""Synthetic ground-truth worlds and the simulations built on them.

A world plants abilities, item parameters, pricing, verbosity, and latency
parameters, then serves responses that obey the logistic response model
exactly.  On top of it sit two studies:

- an anchor-sampling ablation comparing random / difficulty-norm /
  discrimination-norm / task-aware / D-optimal selection for profiling a
  held-out model, with paired trials so strategies see identical response
  draws; and
- an evolving-pool run where newly released models are onboarded from anchor
  responses alone and the lowest-utility pool member is evicted each step.

Desk-scale rewards are not comparable to production numbers; these runs
check directions and orderings, not magnitudes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .anchors import select_anchors
from .estimators import (
    LatencyProfile,
    VerbosityTable,
    calibrate_latency,
    calibrate_verbosity,
    complexity_score,
    estimate_latency,
    estimate_output_length,
)
from .irt import (
    CalibratedSpace,
    CalibrationConfig,
    ItemParams,
    LatentAbility,
    ProfilingObservation,
    ResponseMatrix,
    held_out_probability_mae,
    predict_prob,
    profile_new_model,
    sigmoid,
)
from .routing import (
    Assignment,
    GlobalConstraints,
    PolicyWeights,
    QueryModelEstimate,
    route_constrained,
    route_unconstrained,
    total_reward,
    utility,
)

STRATEGIES = ("random", "diff-based", "disc-based", "task-aware", "d-optimality")


def _as_key(key) -> tuple:
    return tuple(key) if isinstance(key, (tuple, list)) else (key,)


@dataclass
class SyntheticWorld:
    seed: int
    D: int
    noise: float
    mode: str  # "graded" or "bernoulli"
    model_ids: list[str]
    theta: np.ndarray        # (M, D)
    item_ids: list[str]
    alpha: np.ndarray        # (P, D)
    b: np.ndarray            # (P, D)
    price_in: np.ndarray     # (M,)
    price_out: np.ndarray
    ttft: np.ndarray
    tpot: np.ndarray
    len_base: np.ndarray     # output-length curve intercept per model
    len_scale: np.ndarray    # output-length curve range per model
    input_tokens: np.ndarray  # (P,) planted input lengths

    @property
    def M(self) -> int:
        return len(self.model_ids)

    @property
    def P(self) -> int:
        return len(self.item_ids)

    def item_params(self, i: int) -> ItemParams:
        return ItemParams(self.item_ids[i], self.alpha[i], self.b[i])

    def all_items(self) -> list[ItemParams]:
        return [self.item_params(i) for i in range(self.P)]

    def planted_space(self) -> CalibratedSpace:
        abilities = {m: LatentAbility(m, self.theta[i]) for i, m in enumerate(self.model_ids)}
        items = {it: ItemParams(it, self.alpha[i], self.b[i])
                 for i, it in enumerate(self.item_ids)}
        return CalibratedSpace(D=self.D, abilities=abilities, items=items,
                               fit_report={"planted": True, "seed": self.seed})

    def true_probs(self, theta: np.ndarray) -> np.ndarray:
        """Response probabilities of an ability vector on every item."""
        return sigmoid(self.alpha @ theta - np.sum(self.alpha * self.b, axis=1))

    def complexity(self) -> np.ndarray:
        return np.sum(self.alpha * self.b, axis=1)

    def true_output_length(self, model_idx: int, s: np.ndarray | float) -> np.ndarray | float:
        # strictly increasing in s by construction
        return self.len_base[model_idx] + self.len_scale[model_idx] * sigmoid(np.asarray(s) / 2.0)

    def true_cost(self, model_idx: int, item_idx: int) -> float:
        s = float(self.alpha[item_idx] @ self.b[item_idx])
        out_len = float(self.true_output_length(model_idx, s))
        return float(self.price_in[model_idx] * self.input_tokens[item_idx]
                     + self.price_out[model_idx] * out_len)

    def true_latency(self, model_idx: int, item_idx: int) -> float:
        s = float(self.alpha[item_idx] @ self.b[item_idx])
        out_len = float(self.true_output_length(model_idx, s))
        return float(self.ttft[model_idx] + self.tpot[model_idx] * out_len)

    def response_matrix(self) -> ResponseMatrix:
        """Full graded/Bernoulli score matrix for calibration experiments."""
        rng = np.random.default_rng(self.seed + 1)
        probs = np.vstack([self.true_probs(self.theta[m]) for m in range(self.M)])
        if self.mode == "bernoulli":
            scores = rng.binomial(1, probs).astype(float)
        else:
            scores = probs.copy()
            if self.noise > 0:
                scores = np.clip(scores + self.noise * rng.standard_normal(probs.shape), 0, 1)
        mask = np.ones_like(scores, dtype=bool)
        return ResponseMatrix(list(self.model_ids), list(self.item_ids), scores, mask)

    def sample_new_model(self, key, model_id: str | None = None,
                         shift: float = 0.0) -> LatentAbility:
        """Draw a held-out ability from the prior, optionally up-shifted.

        A positive shift models the onboarding regime where newly released
        models outperform the calibration cohort.
        """
        rng = np.random.default_rng((self.seed, 7919) + _as_key(key))
        name = model_id or f"new-{_as_key(key)}"
        return LatentAbility(name, shift + rng.standard_normal(self.D))

    def bernoulli_responses(self, theta: np.ndarray, key) -> np.ndarray:
        """One 0/1 response per item; the paired draw for strategy trials."""
        rng = np.random.default_rng((self.seed, 104729) + _as_key(key))
        return rng.binomial(1, self.true_probs(theta)).astype(float)

    def anchor_verbosity_records(self, model_idx: int, item_indices, key: int = 0):
        """(item_id, complexity, observed output length) rows for calibration."""
        rng = np.random.default_rng((self.seed, 15485863, key))
        s = self.complexity()[item_indices]
        lengths = self.len_base[model_idx] + self.len_scale[model_idx] * sigmoid(s / 2.0)
        if self.noise > 0:
            lengths = np.maximum(lengths * (1 + self.noise * rng.standard_normal(len(s))), 1.0)
        return [(self.item_ids[i], float(sv), float(lv))
                for i, sv, lv in zip(item_indices, s, lengths)]


def generate_world(
    seed: int, M: int, P: int, D: int, noise: float = 0.0, mode: str = "graded"
) -> SyntheticWorld:
    """Plant a world from the documented priors: theta, b ~ N(0, I), alpha = |N(0, I)|."""
    if min(M, P, D) < 1:
        raise ValueError("M, P, D must all be >= 1")
    if mode not in ("graded", "bernoulli"):
        raise ValueError(f"unknown response mode {mode!r}")
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((M, D))
    alpha = np.abs(rng.standard_normal((P, D)))
    b = rng.standard_normal((P, D))
    return SyntheticWorld(
        seed=seed, D=D, noise=noise, mode=mode,
        model_ids=[f"model-{m:04d}" for m in range(M)],
        theta=theta,
        item_ids=[f"item-{i:04d}" for i in range(P)],
        alpha=alpha, b=b,
        price_in=rng.uniform(5e-7, 5e-6, M),
        price_out=rng.uniform(1e-6, 2e-5, M),
        ttft=rng.uniform(0.1, 1.0, M),
        tpot=rng.uniform(0.005, 0.05, M),
        len_base=rng.uniform(50, 200, M),
        len_scale=rng.uniform(100, 400, M),
        input_tokens=rng.integers(20, 400, P).astype(float),
    )


def strategy_anchor_indices(world: SyntheticWorld, strategy: str, N: int,
                            trial_key: int = 0) -> np.ndarray:
    """Item indices picked by one sampling strategy, deterministically.

    Rank strategies take the N items with the largest value of their
    quantity (difficulty norm, discrimination norm, or the complexity score
    alpha . b), breaking ties by item index; D-optimality runs the greedy
    log-det selection; random draws are keyed per trial.
    """
    if N > world.P:
        raise ValueError(f"N={N} exceeds item pool {world.P}")
    if strategy == "random":
        rng = np.random.default_rng((world.seed, 32452843, trial_key))
        return np.sort(rng.choice(world.P, size=N, replace=False))
    if strategy == "diff-based":
        score = -np.linalg.norm(world.b, axis=1)
    elif strategy == "disc-based":
        score = -np.linalg.norm(world.alpha, axis=1)
    elif strategy == "task-aware":
        score = -world.complexity()
    elif strategy == "d-optimality":
        chosen = select_anchors(world.all_items(), N)
        index = {it: i for i, it in enumerate(world.item_ids)}
        return np.sort(np.array([index[i] for i in chosen.item_ids]))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    order = np.lexsort((np.arange(world.P), score))
    return np.sort(order[:N])


@dataclass
class StrategyReport:
    strategy: str
    theta_errors: list[float]
    held_out_mae: list[float]
    trials: int
    summary: dict = field(default_factory=dict)

    def finalize(self) -> "StrategyReport":
        self.summary = {
            "mean_mae": float(np.mean(self.held_out_mae)),
            "std_mae": float(np.std(self.held_out_mae)),
            "mean_theta_error": float(np.mean(self.theta_errors)),
        }
        return self


def compare_sampling_strategies(
    world: SyntheticWorld,
    N: int,
    trials: int,
    config: CalibrationConfig | None = None,
    strategies: tuple[str, ...] = STRATEGIES,
    shift: float = 0.7,
    cohort: int = 3,
) -> list[StrategyReport]:
    """Paired ablation of anchor strategies for profiling held-out models.

    Each trial draws a small cohort of held-out models from an up-shifted
    ability prior (onboarded models tend to outperform the calibration
    cohort) together with one full Bernoulli response vector per model over
    all items.  Every strategy sees the identical draws and differs only in
    which item responses it gets to use, so per-trial results are directly
    comparable.  Bernoulli responses are essential here: noise-free graded
    responses let every strategy recover theta exactly, hiding the contrast.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if cohort < 1:
        raise ValueError("cohort must be >= 1")
    cfg = config or CalibrationConfig(D=world.D)
    space = world.planted_space()
    reports = {s: StrategyReport(s, [], [], trials) for s in strategies}
    for t in range(trials):
        cohort_draws = []
        for j in range(cohort):
            truth = world.sample_new_model((t, j), shift=shift)
            cohort_draws.append((truth, world.bernoulli_responses(truth.theta, (t, j))))
        for strat in strategies:
            idx = strategy_anchor_indices(world, strat, N, trial_key=t)
            held_out = [world.item_params(i) for i in range(world.P) if i not in set(idx)]
            if not held_out:
                held_out = world.all_items()
            errs, maes = [], []
            for truth, responses in cohort_draws:
                obs = [ProfilingObservation(world.item_ids[i], float(responses[i]))
                       for i in idx]
                est = profile_new_model(obs, space, cfg, model_id=f"{strat}-{t}")
                errs.append(float(np.linalg.norm(est.theta - truth.theta)))
                maes.append(held_out_probability_mae(est, truth, held_out))
            reports[strat].theta_errors.append(float(np.mean(errs)))
            reports[strat].held_out_mae.append(float(np.mean(maes)))
    return [reports[s].finalize() for s in strategies]


@dataclass
class SimModel:
    """A model as the world sees it: planted ability plus serving parameters."""

    model_id: str
    theta: np.ndarray
    price_in: float
    price_out: float
    ttft: float
    tpot: float
    len_base: float
    len_scale: float


@dataclass
class PoolMember:
    sim: SimModel
    ability: LatentAbility  # profiled, not planted
    verbosity: VerbosityTable
    latency: LatencyProfile


@dataclass
class StepMetrics:
    step: int
    policy: str
    reward: float
    total_cost: float
    total_latency: float
    pool_hash: str
    pool_ids: list[str]
    assignment: Assignment
    onboarded: str
    evicted: str


def _pool_hash(ids) -> str:
    return hashlib.md5(",".join(sorted(ids)).encode()).hexdigest()[:12]


def onboard_model(
    world: SyntheticWorld,
    sim: SimModel,
    anchor_indices: np.ndarray,
    space: CalibratedSpace,
    cfg: CalibrationConfig,
    K: int = 10,
    response_key: int = 0,
) -> PoolMember:
    """Zero-shot onboarding: anchor responses -> ability, verbosity, latency."""
    probs = world.true_probs(sim.theta)[anchor_indices]
    if world.mode == "bernoulli":
        rng = np.random.default_rng((world.seed, 2, response_key))
        ys = rng.binomial(1, probs).astype(float)
    else:
        ys = probs
    obs = [ProfilingObservation(world.item_ids[i], float(y))
           for i, y in zip(anchor_indices, ys)]
    ability = profile_new_model(obs, space, cfg, model_id=sim.model_id)

    s = world.complexity()[anchor_indices]
    lengths = sim.len_base + sim.len_scale * sigmoid(s / 2.0)
    records = [(world.item_ids[i], float(sv), float(lv))
               for i, sv, lv in zip(anchor_indices, s, lengths)]
    k = min(K, max(1, len(records) // 2))
    verbosity = calibrate_verbosity(records, K=k, model_id=sim.model_id)
    latency = calibrate_latency([(float(lv), sim.ttft + sim.tpot * float(lv))
                                 for lv in lengths])
    return PoolMember(sim=sim, ability=ability, verbosity=verbosity, latency=latency)


def _pool_estimates(world: SyntheticWorld, pool: list[PoolMember],
                    eval_indices: np.ndarray) -> list[QueryModelEstimate]:
    ests = []
    for i in eval_indices:
        item = world.item_params(i)
        s = complexity_score(item)
        for member in pool:
            p = predict_prob(member.ability, item)
            out_len = estimate_output_length(member.verbosity, s)
            cost = (member.sim.price_in * world.input_tokens[i]
                    + member.sim.price_out * out_len)
            lat = estimate_latency(member.latency, out_len)
            ests.append(QueryModelEstimate(world.item_ids[i], member.sim.model_id,
                                           p, float(cost), float(lat)))
    return ests


def _true_observation(world: SyntheticWorld, pool: list[PoolMember],
                      item_idx: int, model_id: str) -> tuple[float, float, float]:
    member = next(m for m in pool if m.sim.model_id == model_id)
    item = world.item_params(item_idx)
    p = predict_prob(LatentAbility(model_id, member.sim.theta), item)
    s = float(world.alpha[item_idx] @ world.b[item_idx])
    out_len = member.sim.len_base + member.sim.len_scale * float(sigmoid(s / 2.0))
    cost = member.sim.price_in * world.input_tokens[item_idx] + member.sim.price_out * out_len
    lat = member.sim.ttft + member.sim.tpot * out_len
    return p, float(cost), float(lat)


def simulate_evolving_pool(
    world: SyntheticWorld,
    initial_pool: list[SimModel],
    stream: list[SimModel],
    anchor_indices: np.ndarray,
    eval_indices: np.ndarray,
    weights: PolicyWeights,
    constraints: GlobalConstraints | None = None,
    policy_name: str = "custom",
    cfg: CalibrationConfig | None = None,
) -> list[StepMetrics]:
    """Fixed-size pool simulation: onboard, evict, route, record.

    Setup (this function's prologue) profiles the initial pool; after that
    each step only calls profiling/calibration for the one incoming model
    and the routing solver.  Nothing is ever re-fit globally: the space and
    anchors passed in stay frozen for the whole run.
    """
    if len(initial_pool) < 2:
        raise ValueError("pool size must be >= 2")
    if not stream:
        raise ValueError("stream supplies no new models")
    cfg = cfg or CalibrationConfig(D=world.D)
    space = world.planted_space()
    pool = [onboard_model(world, sim, anchor_indices, space, cfg, response_key=j)
            for j, sim in enumerate(initial_pool)]

    metrics: list[StepMetrics] = []
    for step, incoming in enumerate(stream):
        member = onboard_model(world, incoming, anchor_indices, space, cfg,
                               response_key=1000 + step)
        pool.append(member)

        ests = _pool_estimates(world, pool, eval_indices)
        mean_util: dict[str, float] = {m.sim.model_id: 0.0 for m in pool}
        for e in ests:
            mean_util[e.model_id] += utility(e, weights) / len(eval_indices)
        evict_id = min(sorted(mean_util), key=lambda m: mean_util[m])
        pool = [m for m in pool if m.sim.model_id != evict_id]

        ests = _pool_estimates(world, pool, eval_indices)
        if constraints is not None and constraints.any_present():
            assignment = route_constrained(ests, weights, constraints)
        else:
            assignment = route_unconstrained(ests, weights)

        observed = {}
        total_cost = total_lat = 0.0
        id_index = {iid: i for i, iid in enumerate(world.item_ids)}
        for qid, mid in assignment.choices.items():
            obs = _true_observation(world, pool, id_index[qid], mid)
            observed[qid] = obs
            total_cost += obs[1]
            total_lat += obs[2]
        reward = total_reward(assignment, observed, weights).total_reward if observed else 0.0

        metrics.append(StepMetrics(
            step=step,
            policy=policy_name,
            reward=float(reward),
            total_cost=float(total_cost),
            total_latency=float(total_lat),
            pool_hash=_pool_hash([m.sim.model_id for m in pool]),
            pool_ids=sorted(m.sim.model_id for m in pool),
            assignment=assignment,
            onboarded=incoming.model_id,
            evicted=evict_id,
        ))
    return metrics


def make_dominance_stream(
    world: SyntheticWorld, steps: int, delta: float = 0.3,
    price_in: float = 1e-6, price_out: float = 5e-6,
    ttft: float = 0.3, tpot: float = 0.01,
    len_base: float = 100.0, len_scale: float = 200.0,
) -> tuple[list[SimModel], list[SimModel]]:
    """Initial pool + stream where each newcomer dominates everything before it.

    All models share pricing, latency and verbosity parameters; ability rises
    by `delta` in every coordinate per release, so under an accuracy-weighted
    policy each step's best available utility can only improve.
    """

    def mk(name, level):
        return SimModel(
            model_id=name, theta=np.full(world.D, level),
            price_in=price_in, price_out=price_out, ttft=ttft, tpot=tpot,
            len_base=len_base, len_scale=len_scale,
        )

    initial = [mk(f"base-{j}", -1.0 + delta * j) for j in range(3)]
    stream = [mk(f"rel-{t:03d}", delta * (t + 1)) for t in range(steps)]
    return initial, stream


def make_clone_stream(world: SyntheticWorld, steps: int) -> tuple[list[SimModel], list[SimModel]]:
    """Identical models forever; the reward trajectory must stay flat."""
    base, stream = make_dominance_stream(world, steps, delta=0.0)
    for j, m in enumerate(base):
        m.theta = np.zeros(world.D)
    return base, stream


def metrics_to_csv(metrics: list[StepMetrics]) -> str:
    lines = ["step,policy,reward,total_cost,total_latency,pool_hash"]
    for m in metrics:
        lines.append(f"{m.step},{m.policy},{m.reward!r},{m.total_cost!r},"
                     f"{m.total_latency!r},{m.pool_hash}")
    return "\n".join(lines) + "\n"


def run_scenario(cfg: dict) -> tuple[list[StepMetrics], str]:
    """Drive an evolving-pool run from a flat config mapping (see config.py)."""
    world = generate_world(
        seed=int(cfg.get("world.seed", 0)),
        M=int(cfg.get("world.models", 10)),
        P=int(cfg.get("world.items", 200)),
        D=int(cfg.get("world.dimension", 3)),
        noise=float(cfg.get("world.noise", 0.0)),
        mode=str(cfg.get("world.mode", "graded")),
    )
    n_anchors = int(cfg.get("anchors.count", 40))
    anchor_idx = strategy_anchor_indices(world, "d-optimality", n_anchors)
    rng = np.random.default_rng(world.seed + 5)
    n_eval = min(int(cfg.get("eval.items", 50)), world.P)
    eval_idx = np.sort(rng.choice(world.P, size=n_eval, replace=False))

    policy = str(cfg.get("policy.name", "max-acc"))
    from .routing import POLICY_PRESETS

    if policy in POLICY_PRESETS:
        weights = POLICY_PRESETS[policy]
    else:
        weights = PolicyWeights(float(cfg["policy.p"]), float(cfg["policy.c"]),
                                float(cfg["policy.t"]))
    constraints = GlobalConstraints(
        max_total_cost=cfg.get("constraints.max_total_cost"),
        max_total_latency=cfg.get("constraints.max_total_latency"),
        min_mean_accuracy=cfg.get("constraints.min_mean_accuracy"),
    )
    steps = int(cfg.get("pool.steps", 10))
    kind = str(cfg.get("stream.kind", "dominance"))
    if kind == "dominance":
        initial, stream = make_dominance_stream(world, steps)
    elif kind == "clones":
        initial, stream = make_clone_stream(world, steps)
    else:
        raise ValueError(f"unknown stream kind {kind!r}")
    size = int(cfg.get("pool.size", len(initial)))
    if size < 2:
        raise ValueError("pool.size must be >= 2")
    while len(initial) < size:
        initial.append(SimModel(
            model_id=f"pad-{len(initial)}", theta=np.zeros(world.D),
            price_in=1e-6, price_out=5e-6, ttft=0.3, tpot=0.01,
            len_base=100.0, len_scale=200.0,
        ))
    metrics = simulate_evolving_pool(
        world, initial[:size], stream, anchor_idx, eval_idx, weights,
        constraints=constraints, policy_name=policy,
    )
    return metrics, metrics_to_csv(metrics)
