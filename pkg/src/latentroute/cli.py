"""Command-line driver for every pipeline stage.

    latentroute calibrate            response CSV -> calibrated space JSON
    latentroute select-anchors       space JSON -> anchor JSON + gain CSV
    latentroute profile-model        anchor observation CSV -> model profile JSON
    latentroute calibrate-estimators measurement CSV -> verbosity/latency into profile
    latentroute train-predictor      examples JSONL (+ optional EMB file) -> predictor JSON
    latentroute route                queries JSONL -> assignment CSV
    latentroute serve                run the NDJSON routing service on a registry dir
    latentroute simulate             scenario config -> metrics CSV

Commands are deterministic for fixed inputs and seeds.  Flat TOML-style
config files (--config) supply defaults; LATENTROUTE_* environment variables
override them (see config.py).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .anchors import select_anchors
from .embeddings import read_embeddings
from .estimators import ModelPricing, calibrate_latency, calibrate_verbosity
from .irt import (
    CalibratedSpace,
    CalibrationConfig,
    ProfilingObservation,
    ResponseMatrix,
    fit_calibration,
    profile_new_model,
)
from .predictor import TrainConfig, TrainingExample, predict_item_params, train
from .registry import (
    ModelProfile,
    Registry,
    add_anchor_set,
    load_registry,
    register_model,
    save_registry,
    set_predictor,
)
from .routing import (
    POLICY_PRESETS,
    GlobalConstraints,
    PolicyWeights,
    assignment_to_csv,
    route_constrained,
    score_matrix,
)


def _load_cfg(args) -> dict:
    if getattr(args, "config", None):
        return cfgmod.load_config(args.config)
    return cfgmod.apply_env_overrides({})


def _update_registry(args, mutate) -> None:
    """Apply a functional registry update when --registry was passed."""
    reg_dir = getattr(args, "registry", None)
    if not reg_dir:
        return
    registry = load_registry(reg_dir)
    save_registry(mutate(registry), reg_dir)


def _weights(args, cfg: dict) -> PolicyWeights:
    if getattr(args, "policy", None):
        return POLICY_PRESETS[args.policy]
    if args.w_p is not None:
        return PolicyWeights(args.w_p, args.w_c, args.w_t)
    name = cfg.get("policy.name")
    if name:
        return POLICY_PRESETS[str(name)]
    return POLICY_PRESETS["balanced"]


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    responses = ResponseMatrix.from_csv(args.responses)
    cc = CalibrationConfig(
        D=args.dimension or int(cfg.get("calibrate.dimension", 3)),
        epochs=args.epochs or int(cfg.get("calibrate.epochs", 3000)),
        learning_rate=float(cfg.get("calibrate.learning_rate", 0.1)),
        seed=args.seed,
    )
    space = fit_calibration(responses, cc)
    space.save(args.out)
    if args.registry:
        save_registry(Registry(space=space), args.registry)
    print(f"calibrated {len(space.abilities)} models x {len(space.items)} items "
          f"(D={space.D}, final loss {space.fit_report['final_loss']:.4f}) -> {args.out}")
    return 0


def cmd_select_anchors(args) -> int:
    space = CalibratedSpace.load(args.space)
    anchors = select_anchors(list(space.items.values()), args.count, args.epsilon)
    anchors.save(args.out)
    gain_csv = Path(args.gain_csv) if args.gain_csv else Path(args.out).with_suffix(".gains.csv")
    gain_csv.write_text(anchors.gain_curve_csv())
    _update_registry(args, lambda reg: add_anchor_set(reg, args.anchor_set_id, anchors))
    print(f"selected {args.count} anchors (log-det gain {sum(anchors.gains):.4f}) "
          f"-> {args.out}, {gain_csv}")
    return 0


def _read_observations(path: str) -> list[ProfilingObservation]:
    lines = Path(path).read_text().splitlines()
    header = [h.strip() for h in lines[0].split(",")]
    idx_item, idx_score = header.index("item_id"), header.index("score")
    obs = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        cells = ln.split(",")
        obs.append(ProfilingObservation(cells[idx_item].strip(), float(cells[idx_score])))
    return obs


def cmd_profile_model(args) -> int:
    space = CalibratedSpace.load(args.space)
    cc = CalibrationConfig(D=space.D, seed=args.seed)
    ability = profile_new_model(_read_observations(args.observations), space, cc,
                                model_id=args.model_id)
    profile = ModelProfile(
        model_id=args.model_id,
        ability=ability,
        pricing=ModelPricing(args.price_in, args.price_out),
        tokenizer_id=args.tokenizer,
        metadata={"anchor_set_id": args.anchor_set_id} if args.anchor_set_id else {},
    )
    Path(args.out).write_text(json.dumps(profile.to_json()))
    _update_registry(args, lambda reg: register_model(reg, profile, overwrite=True))
    print(f"profiled {args.model_id}: theta={np.round(ability.theta, 4).tolist()} -> {args.out}")
    return 0


def cmd_calibrate_estimators(args) -> int:
    profile = ModelProfile.from_json(json.loads(Path(args.profile).read_text()))
    lines = Path(args.measurements).read_text().splitlines()
    header = [h.strip() for h in lines[0].split(",")]
    cols = {name: header.index(name) for name in
            ("item_id", "score", "output_tokens", "latency_seconds")}
    records, latencies = [], []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        c = ln.split(",")
        records.append((c[cols["item_id"]].strip(), float(c[cols["score"]]),
                        float(c[cols["output_tokens"]])))
        latencies.append((float(c[cols["output_tokens"]]), float(c[cols["latency_seconds"]])))
    profile.verbosity = calibrate_verbosity(records, K=args.bins, model_id=profile.model_id)
    profile.latency = calibrate_latency(latencies)
    Path(args.profile).write_text(json.dumps(profile.to_json()))
    _update_registry(args, lambda reg: register_model(reg, profile, overwrite=True))
    print(f"calibrated estimators for {profile.model_id}: "
          f"ttft={profile.latency.ttft:.4f}s tpot={profile.latency.tpot:.5f}s/tok "
          f"({args.bins} verbosity bins)")
    return 0


def cmd_train_predictor(args) -> int:
    space = CalibratedSpace.load(args.space)
    embeddings = read_embeddings(args.embeddings) if args.embeddings else {}
    examples = []
    for ln in Path(args.examples).read_text().splitlines():
        if not ln.strip():
            continue
        doc = json.loads(ln)
        qid = str(doc["id"])
        examples.append(TrainingExample(
            query_id=qid,
            text=str(doc["text"]),
            target_alpha=np.array(doc["alpha"], dtype=float),
            target_b=np.array(doc["b"], dtype=float),
            embedding=embeddings.get(qid),
        ))
    tc = TrainConfig(epochs=args.epochs, seed=args.seed, C=args.clusters)
    model = train(examples, space, tc)
    model.save(args.out)
    _update_registry(args, lambda reg: set_predictor(reg, model))
    print(f"trained predictor on {len(examples)} examples "
          f"(final loss {model.loss_history[-1]:.6f}) -> {args.out}")
    return 0


def _read_queries(path: str) -> list[tuple[str, str]]:
    out = []
    for ln in Path(path).read_text().splitlines():
        if not ln.strip():
            continue
        doc = json.loads(ln)
        out.append((str(doc["id"]), str(doc["text"])))
    return out


def cmd_route(args) -> int:
    cfg = _load_cfg(args)
    registry = load_registry(args.registry)
    if registry.predictor is None:
        print("registry has no trained predictor", file=sys.stderr)
        return 2
    weights = _weights(args, cfg)
    constraints = GlobalConstraints(
        max_total_cost=args.max_cost, max_total_latency=args.max_latency,
        min_mean_accuracy=args.min_accuracy,
    )
    queries = _read_queries(args.queries)
    triples = [(qid, predict_item_params(registry.predictor, qid, text), text)
               for qid, text in queries]
    profiles = [registry.profiles[m] for m in sorted(registry.profiles)]
    estimates = score_matrix(triples, profiles)
    assignment = route_constrained(estimates, weights, constraints)
    if not assignment.feasible:
        print("infeasible under the given constraints", file=sys.stderr)
        return 3
    Path(args.out).write_text(assignment_to_csv(assignment, estimates, weights))
    print(f"routed {len(queries)} queries with {assignment.solver} solver "
          f"(objective {assignment.objective_value:.6f}) -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import RoutingServer

    registry = load_registry(args.registry)
    server = RoutingServer(registry, host=args.host, port=args.port)
    host, port = server.address
    print(f"routing service on {host}:{port} (registry v{registry.version}, "
          f"{len(registry.profiles)} models)")
    server.start()
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_simulate(args) -> int:
    from .simulate import run_scenario

    cfg = cfgmod.load_config(args.scenario)
    _, csv_text = run_scenario(cfg)
    Path(args.out).write_text(csv_text)
    print(f"simulation metrics -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latentroute")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit the latent space from a response CSV")
    p.add_argument("responses")
    p.add_argument("--out", required=True)
    p.add_argument("--dimension", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--registry", default=None, help="also initialize this registry dir")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("select-anchors", help="greedy D-optimal anchor selection")
    p.add_argument("space")
    p.add_argument("--count", "-n", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--gain-csv", default=None)
    p.add_argument("--registry", default=None)
    p.add_argument("--anchor-set-id", default="main")
    p.set_defaults(func=cmd_select_anchors)

    p = sub.add_parser("profile-model", help="estimate a new model's ability from anchors")
    p.add_argument("observations", help="CSV with item_id,score columns")
    p.add_argument("--space", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--price-in", type=float, default=0.0)
    p.add_argument("--price-out", type=float, default=0.0)
    p.add_argument("--tokenizer", default="chars4")
    p.add_argument("--anchor-set-id", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--registry", default=None)
    p.set_defaults(func=cmd_profile_model)

    p = sub.add_parser("calibrate-estimators",
                       help="fit verbosity bins and latency line into a profile")
    p.add_argument("measurements", help="CSV: item_id,score,output_tokens,latency_seconds")
    p.add_argument("--profile", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--registry", default=None)
    p.set_defaults(func=cmd_calibrate_estimators)

    p = sub.add_parser("train-predictor", help="train the query-to-coordinates predictor")
    p.add_argument("examples", help="JSONL: {id, text, alpha, b}")
    p.add_argument("--space", required=True)
    p.add_argument("--embeddings", default=None, help="optional EMB v1 file")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--registry", default=None)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("route", help="assign queries to models")
    p.add_argument("queries", help="JSONL: {id, text}")
    p.add_argument("--registry", required=True)
    p.add_argument("--policy", choices=sorted(POLICY_PRESETS), default=None)
    p.add_argument("--w-p", type=float, default=None)
    p.add_argument("--w-c", type=float, default=0.0)
    p.add_argument("--w-t", type=float, default=0.0)
    p.add_argument("--max-cost", type=float, default=None)
    p.add_argument("--max-latency", type=float, default=None)
    p.add_argument("--min-accuracy", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("serve", help="run the NDJSON routing service")
    p.add_argument("--registry", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7411)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run an evolving-pool scenario")
    p.add_argument("scenario", help="flat TOML-style scenario config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
