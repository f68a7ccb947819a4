import json
from pathlib import Path

import numpy as np
import pytest

from latentroute.cli import main
from latentroute.irt import CalibratedSpace
from latentroute.registry import load_registry
from latentroute.simulate import generate_world


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Drive the full pipeline through the CLI once; tests inspect artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    world = generate_world(seed=0, M=10, P=60, D=3)
    reg_dir = root / "registry"

    rm_csv = root / "responses.csv"
    world.response_matrix().to_csv(rm_csv)
    assert main(["calibrate", str(rm_csv), "--out", str(root / "space.json"),
                 "--dimension", "3", "--epochs", "600", "--seed", "0",
                 "--registry", str(reg_dir)]) == 0

    assert main(["select-anchors", str(root / "space.json"), "--count", "12",
                 "--out", str(root / "anchors.json"), "--registry", str(reg_dir)]) == 0

    anchors = json.loads((root / "anchors.json").read_text())
    anchor_ids = [a["item_id"] for a in anchors["anchors"]]
    idx = {iid: i for i, iid in enumerate(world.item_ids)}
    new_theta = np.full(3, 0.8)
    probs = world.true_probs(new_theta)

    obs_csv = root / "observations.csv"
    rows = ["item_id,score"] + [f"{iid},{float(probs[idx[iid]])!r}" for iid in anchor_ids]
    obs_csv.write_text("\n".join(rows) + "\n")
    assert main(["profile-model", str(obs_csv), "--space", str(root / "space.json"),
                 "--model-id", "m-new", "--price-in", "1e-6", "--price-out", "5e-6",
                 "--tokenizer", "whitespace", "--anchor-set-id", "main",
                 "--out", str(root / "profile.json"), "--registry", str(reg_dir)]) == 0

    meas_csv = root / "measurements.csv"
    s = world.complexity()
    rows = ["item_id,score,output_tokens,latency_seconds"]
    for iid in anchor_ids:
        i = idx[iid]
        length = float(world.true_output_length(0, s[i]))
        rows.append(f"{iid},{float(s[i])!r},{length!r},{0.4 + 0.01 * length!r}")
    meas_csv.write_text("\n".join(rows) + "\n")
    assert main(["calibrate-estimators", str(meas_csv), "--profile",
                 str(root / "profile.json"), "--bins", "4",
                 "--registry", str(reg_dir)]) == 0

    space = CalibratedSpace.load(root / "space.json")
    ex_jsonl = root / "examples.jsonl"
    lines = []
    for k, (iid, item) in enumerate(list(space.items.items())[:30]):
        lines.append(json.dumps({
            "id": iid, "text": f"benchmark question number {k} about area {k % 4}",
            "alpha": item.alpha.tolist(), "b": item.b.tolist(),
        }))
    ex_jsonl.write_text("\n".join(lines) + "\n")
    assert main(["train-predictor", str(ex_jsonl), "--space", str(root / "space.json"),
                 "--epochs", "30", "--clusters", "2", "--seed", "0",
                 "--out", str(root / "predictor.json"), "--registry", str(reg_dir)]) == 0

    q_jsonl = root / "queries.jsonl"
    q_jsonl.write_text("\n".join([
        json.dumps({"id": "qa", "text": "What is the derivative of sin(x)?"}),
        json.dumps({"id": "qb", "text": "Summarize the plot of Hamlet."}),
    ]) + "\n")
    assert main(["route", str(q_jsonl), "--registry", str(reg_dir),
                 "--policy", "balanced", "--out", str(root / "assign.csv")]) == 0
    return root, reg_dir, world


def test_space_artifact_schema(pipeline):
    root, _, _ = pipeline
    doc = json.loads((root / "space.json").read_text())
    assert set(doc) == {"D", "items", "abilities", "fit_report"}
    an_item = next(iter(doc["items"].values()))
    assert set(an_item) == {"alpha", "b"}


def test_anchor_artifact_schema_and_gain_csv(pipeline):
    root, _, _ = pipeline
    doc = json.loads((root / "anchors.json").read_text())
    assert set(doc) == {"epsilon", "D", "anchors"}
    assert all(set(a) == {"item_id", "gain"} for a in doc["anchors"])
    gains = [a["gain"] for a in doc["anchors"]]
    assert all(b <= a + 1e-9 for a, b in zip(gains, gains[1:]))
    gain_csv = (root / "anchors.gains.csv").read_text().splitlines()
    assert gain_csv[0] == "step,item_id,gain"
    assert len(gain_csv) == 13


def test_registry_assembled_by_cli(pipeline):
    root, reg_dir, _ = pipeline
    reg = load_registry(reg_dir)
    assert "m-new" in reg.profiles
    assert reg.profiles["m-new"].verbosity is not None
    assert reg.profiles["m-new"].latency is not None
    assert reg.predictor is not None
    assert "main" in reg.anchor_sets


def test_profile_recovers_planted_ability(pipeline):
    root, _, world = pipeline
    prof = json.loads((root / "profile.json").read_text())
    # graded noise-free observations in a well-calibrated space keep the
    # estimate near the planted vector
    assert np.linalg.norm(np.array(prof["ability"]) - 0.8) < 0.8


def test_assignment_csv_shape(pipeline):
    root, _, _ = pipeline
    lines = (root / "assign.csv").read_text().strip().splitlines()
    assert lines[0] == "query_id,model_id,p,cost,latency,utility"
    assert len(lines) == 3
    assert all(ln.split(",")[1] == "m-new" for ln in lines[1:])


def test_route_idempotent_on_same_inputs(pipeline):
    root, reg_dir, _ = pipeline
    before = (root / "assign.csv").read_bytes()
    assert main(["route", str(root / "queries.jsonl"), "--registry", str(reg_dir),
                 "--policy", "balanced", "--out", str(root / "assign2.csv")]) == 0
    assert (root / "assign2.csv").read_bytes() == before


def test_calibrate_idempotent(pipeline, tmp_path):
    root, _, _ = pipeline
    out1, out2 = tmp_path / "s1.json", tmp_path / "s2.json"
    for out in (out1, out2):
        assert main(["calibrate", str(root / "responses.csv"), "--out", str(out),
                     "--dimension", "3", "--epochs", "200", "--seed", "5"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_command(tmp_path):
    scenario = tmp_path / "scenario.toml"
    scenario.write_text(
        "[world]\nseed = 7\nmodels = 6\nitems = 60\ndimension = 3\n"
        "[anchors]\ncount = 20\n[eval]\nitems = 20\n"
        "[pool]\nsteps = 3\nsize = 3\n[policy]\nname = \"max-acc\"\n"
        "[stream]\nkind = \"dominance\"\n"
    )
    out = tmp_path / "metrics.csv"
    assert main(["simulate", str(scenario), "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "step,policy,reward,total_cost,total_latency,pool_hash"
    assert len(lines) == 4
