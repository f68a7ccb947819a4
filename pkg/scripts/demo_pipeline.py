"""End-to-end walkthrough on synthetic data.

Calibrates a latent space from a planted world, selects D-optimal anchors,
onboards a brand-new model from its anchor responses alone, trains the text
predictor, then routes a small query batch and serves one request over the
wire.  Artifacts land in --workdir for inspection.

    python scripts/demo_pipeline.py --workdir /tmp/latentroute-demo
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from latentroute.anchors import select_anchors
from latentroute.estimators import ModelPricing, calibrate_latency, calibrate_verbosity
from latentroute.irt import CalibrationConfig, ProfilingObservation, fit_calibration, profile_new_model
from latentroute.predictor import TrainConfig, TrainingExample, train
from latentroute.registry import ModelProfile, Registry, add_anchor_set, register_model, save_registry, set_predictor
from latentroute.routing import POLICY_PRESETS, route_constrained, score_matrix, assignment_to_csv, GlobalConstraints
from latentroute.predictor import predict_item_params
from latentroute.service import RoutingServer, request_over_socket
from latentroute.simulate import generate_world


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="demo-artifacts")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    print("1. planting a synthetic world and calibrating the latent space")
    world = generate_world(args.seed, M=20, P=150, D=3)
    responses = world.response_matrix()
    responses.to_csv(work / "responses.csv")
    space = fit_calibration(responses, CalibrationConfig(D=3, epochs=1500, seed=args.seed))
    space.save(work / "space.json")
    print(f"   final loss {space.fit_report['final_loss']:.2f}")

    print("2. selecting 12 D-optimal anchors")
    anchors = select_anchors(list(space.items.values()), N=12)
    anchors.save(work / "anchors.json")
    (work / "anchor_gains.csv").write_text(anchors.gain_curve_csv())

    print("3. onboarding a new model from anchor responses only")
    truth = world.sample_new_model(1, model_id="m-new", shift=0.5)
    probs = world.true_probs(truth.theta)
    idx = {iid: i for i, iid in enumerate(world.item_ids)}
    obs = [ProfilingObservation(a, float(probs[idx[a]])) for a in anchors.item_ids]
    ability = profile_new_model(obs, space, CalibrationConfig(D=3), model_id="m-new")
    anchor_set = set(anchors.item_ids)
    held = [it for iid, it in space.items.items() if iid not in anchor_set]
    from latentroute.irt import predict_prob

    mae = float(np.mean([
        abs(predict_prob(ability, it) - probs[idx[it.item_id]]) for it in held
    ]))
    print(f"   held-out probability MAE vs planted truth: {mae:.4f} "
          f"({len(anchors.item_ids)} anchors, {len(held)} held-out items)")

    print("4. calibrating verbosity and latency estimators from anchors")
    anchor_idx = np.array([idx[a] for a in anchors.item_ids])
    records = world.anchor_verbosity_records(0, anchor_idx)
    verbosity = calibrate_verbosity(records, K=4, model_id="m-new")
    latency = calibrate_latency([(l, 0.4 + 0.012 * l) for (_, _, l) in records])

    print("5. training the query predictor (hashing embedder path)")
    examples = [
        TrainingExample(iid, f"synthetic benchmark prompt {k} topic {k % 6}",
                        target_alpha=item.alpha, target_b=item.b)
        for k, (iid, item) in enumerate(space.items.items())
    ]
    predictor = train(examples, space,
                      TrainConfig(epochs=60, seed=args.seed, C=2,
                                  trunk_widths=(64, 64), head_width=32))

    registry = Registry(space=space)
    registry = add_anchor_set(registry, "main", anchors)
    registry = set_predictor(registry, predictor)
    registry = register_model(registry, ModelProfile(
        model_id="m-new", ability=ability, pricing=ModelPricing(1e-6, 5e-6),
        tokenizer_id="chars4", verbosity=verbosity, latency=latency,
        metadata={"anchor_set_id": "main"},
    ))
    save_registry(registry, work / "registry")

    print("6. routing a query batch in process")
    queries = [
        ("qa", "What is the time complexity of quicksort in the worst case?"),
        ("qb", "Write a haiku about the sea."),
    ]
    triples = [(qid, predict_item_params(predictor, qid, text), text)
               for qid, text in queries]
    estimates = score_matrix(triples, [registry.profiles["m-new"]])
    assignment = route_constrained(estimates, POLICY_PRESETS["balanced"],
                                   GlobalConstraints())
    (work / "assignment.csv").write_text(
        assignment_to_csv(assignment, estimates, POLICY_PRESETS["balanced"]))
    print(f"   choices {assignment.choices}")

    print("7. serving the same request over the wire")
    with RoutingServer(registry) as server:
        host, port = server.address
        response = request_over_socket(host, port, {
            "id": "demo",
            "queries": [{"id": q, "text": t} for q, t in queries],
            "weights": {"p": 0.5, "c": 0.3, "t": 0.2},
        })
    print(f"   wire choices {[c['model_id'] for c in response['choices']]} "
          f"(registry v{response['registry_version']})")
    print(f"artifacts -> {work}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
