"""Model-profile registry and its on-disk layout.

A Registry bundles everything routing needs: the calibrated space, anchor
sets, per-model profiles (ability + pricing + verbosity + latency), and the
query predictor.  Registries are immutable snapshots; mutation helpers return
a new value with a bumped version so a server can atomically swap the
reference while concurrent readers keep a consistent view.

On disk a registry is a directory of JSON documents plus a manifest:

    manifest.json       {"version": ..., "space": ..., "anchor_sets": [...],
                         "profiles": [...], "predictor": ...}
    space.json          calibrated space
    anchors/<id>.json   anchor sets
    profiles/<id>.json  model profiles
    predictor.json      predictor weights (optional)
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .errors import DimensionMismatch
from .estimators import LatencyProfile, ModelPricing, VerbosityTable
from .irt import CalibratedSpace, LatentAbility
from .predictor import PredictorModel


@dataclass
class ModelProfile:
    model_id: str
    ability: LatentAbility
    pricing: ModelPricing
    tokenizer_id: str
    verbosity: VerbosityTable | None = None
    latency: LatencyProfile | None = None
    metadata: dict = field(default_factory=dict)  # display_name, onboarded_at, anchor_set_id

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "ability": self.ability.theta.tolist(),
            "pricing": {"price_in": self.pricing.price_in, "price_out": self.pricing.price_out},
            "tokenizer_id": self.tokenizer_id,
            "verbosity": self.verbosity.to_json() if self.verbosity else None,
            "latency": self.latency.to_json() if self.latency else None,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelProfile":
        return cls(
            model_id=doc["model_id"],
            ability=LatentAbility(doc["model_id"], np.array(doc["ability"], dtype=float)),
            pricing=ModelPricing(**doc["pricing"]),
            tokenizer_id=doc["tokenizer_id"],
            verbosity=VerbosityTable.from_json(doc["verbosity"]) if doc.get("verbosity") else None,
            latency=LatencyProfile.from_json(doc["latency"]) if doc.get("latency") else None,
            metadata=dict(doc.get("metadata", {})),
        )


@dataclass
class Registry:
    space: CalibratedSpace
    anchor_sets: dict[str, AnchorSet] = field(default_factory=dict)
    profiles: dict[str, ModelProfile] = field(default_factory=dict)
    predictor: PredictorModel | None = None
    version: int = 0

    def validate(self) -> None:
        D = self.space.D
        for p in self.profiles.values():
            if p.ability.theta.size != D:
                raise DimensionMismatch(D, p.ability.theta.size, f"profile {p.model_id!r}")
            ref = p.metadata.get("anchor_set_id")
            if ref is not None and ref not in self.anchor_sets:
                raise ValueError(f"profile {p.model_id!r} references unknown anchor set {ref!r}")
        for a in self.anchor_sets.values():
            if a.D != D:
                raise DimensionMismatch(D, a.D, "anchor set")
        if self.predictor is not None and self.predictor.D != D:
            raise DimensionMismatch(D, self.predictor.D, "predictor")


def register_model(registry: Registry, profile: ModelProfile, overwrite: bool = False) -> Registry:
    """Return a new registry snapshot containing the profile.

    Routing sees the model as soon as a server swaps in the returned
    snapshot; nothing is retrained.
    """
    if profile.ability.theta.size != registry.space.D:
        raise DimensionMismatch(registry.space.D, profile.ability.theta.size,
                                f"profile {profile.model_id!r}")
    if profile.model_id in registry.profiles and not overwrite:
        raise ValueError(f"model {profile.model_id!r} already registered (pass overwrite)")
    ref = profile.metadata.get("anchor_set_id")
    if ref is not None and ref not in registry.anchor_sets:
        raise ValueError(f"profile {profile.model_id!r} references unknown anchor set {ref!r}")
    profiles = dict(registry.profiles)
    profiles[profile.model_id] = profile
    return dataclasses.replace(registry, profiles=profiles, version=registry.version + 1)


def add_anchor_set(registry: Registry, anchor_set_id: str, anchors: AnchorSet) -> Registry:
    if anchors.D != registry.space.D:
        raise DimensionMismatch(registry.space.D, anchors.D, f"anchor set {anchor_set_id!r}")
    sets = dict(registry.anchor_sets)
    sets[anchor_set_id] = anchors
    return dataclasses.replace(registry, anchor_sets=sets, version=registry.version + 1)


def set_predictor(registry: Registry, predictor: PredictorModel) -> Registry:
    if predictor.D != registry.space.D:
        raise DimensionMismatch(registry.space.D, predictor.D, "predictor")
    return dataclasses.replace(registry, predictor=predictor, version=registry.version + 1)


def save_registry(registry: Registry, root: str | Path) -> None:
    root = Path(root)
    (root / "anchors").mkdir(parents=True, exist_ok=True)
    (root / "profiles").mkdir(parents=True, exist_ok=True)
    registry.space.save(root / "space.json")
    for aid, aset in registry.anchor_sets.items():
        aset.save(root / "anchors" / f"{aid}.json")
    for mid, prof in registry.profiles.items():
        (root / "profiles" / f"{mid}.json").write_text(json.dumps(prof.to_json()))
    if registry.predictor is not None:
        registry.predictor.save(root / "predictor.json")
    manifest = {
        "version": registry.version,
        "space": "space.json",
        "anchor_sets": sorted(registry.anchor_sets),
        "profiles": sorted(registry.profiles),
        "predictor": "predictor.json" if registry.predictor is not None else None,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_registry(root: str | Path) -> Registry:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    space = CalibratedSpace.load(root / manifest["space"])
    anchor_sets = {
        aid: AnchorSet.load(root / "anchors" / f"{aid}.json") for aid in manifest["anchor_sets"]
    }
    profiles = {
        mid: ModelProfile.from_json(json.loads((root / "profiles" / f"{mid}.json").read_text()))
        for mid in manifest["profiles"]
    }
    predictor = None
    if manifest.get("predictor"):
        predictor = PredictorModel.load(root / manifest["predictor"])
    reg = Registry(
        space=space,
        anchor_sets=anchor_sets,
        profiles=profiles,
        predictor=predictor,
        version=int(manifest["version"]),
    )
    reg.validate()
    return reg
