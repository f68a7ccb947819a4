"""Per-model cost, output-length and latency estimators.

Cost is the usual per-token linear tariff.  Output length comes from a
complexity-binned lookup: anchor items are bucketed into K equal-frequency
bins of the complexity score s = alpha . b and each bin stores the mean
observed output length.  Latency is the affine model ttft + length * tpot
with parameters recovered by ordinary least squares on anchor measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, UnknownTokenizerError
from .irt import ItemParams


@dataclass(frozen=True)
class ModelPricing:
    price_in: float   # currency per input token
    price_out: float  # currency per output token

    def __post_init__(self):
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError("prices must be >= 0")


@dataclass(frozen=True)
class TokenCounts:
    """Input/output token counts; estimated output lengths may be fractional."""

    input_tokens: float
    output_tokens: float

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class Tokenizer:
    tokenizer_id: str
    count: Callable[[str], int]


def _whitespace_count(text: str) -> int:
    return len(text.split())


def _chars4_count(text: str) -> int:
    # byte-pair approximation: one token per 4 characters, rounded up
    return math.ceil(len(text) / 4)


_TOKENIZERS: dict[str, Tokenizer] = {}


def register_tokenizer(tok: Tokenizer) -> None:
    _TOKENIZERS[tok.tokenizer_id] = tok


def get_tokenizer(tokenizer_id: str) -> Tokenizer:
    try:
        return _TOKENIZERS[tokenizer_id]
    except KeyError:
        raise UnknownTokenizerError(tokenizer_id) from None


register_tokenizer(Tokenizer("whitespace", _whitespace_count))
register_tokenizer(Tokenizer("chars4", _chars4_count))


def estimate_cost(pricing: ModelPricing, tokens: TokenCounts) -> float:
    return pricing.price_in * tokens.input_tokens + pricing.price_out * tokens.output_tokens


def count_input_tokens(tokenizer: Tokenizer, query: str) -> int:
    n = int(tokenizer.count(query))
    if n < 0:
        raise ValueError(f"tokenizer {tokenizer.tokenizer_id!r} returned a negative count")
    return n


def complexity_score(item: ItemParams) -> float:
    """Task-aware difficulty: inner product of discrimination and difficulty."""
    if item.alpha.size != item.b.size:
        raise DimensionMismatch(item.alpha.size, item.b.size, f"item {item.item_id!r}")
    return float(item.alpha @ item.b)


@dataclass
class VerbosityTable:
    model_id: str
    bin_edges: list[float]     # K+1 edges, strictly increasing
    mean_lengths: list[float]  # K per-bin mean output lengths
    global_mean: float

    def __post_init__(self):
        if len(self.bin_edges) != len(self.mean_lengths) + 1:
            raise ValueError("need K+1 edges for K bins")
        if len(self.mean_lengths) < 1:
            raise ValueError("need at least one bin")
        if any(b >= a for a, b in zip(self.bin_edges[1:], self.bin_edges[:-1])):
            raise ValueError("bin edges must be strictly increasing")
        if any(m < 0 for m in self.mean_lengths):
            raise ValueError("mean lengths must be >= 0")

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "bin_edges": list(self.bin_edges),
            "mean_lengths": list(self.mean_lengths),
            "global_mean": self.global_mean,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "VerbosityTable":
        return cls(
            model_id=doc["model_id"],
            bin_edges=[float(x) for x in doc["bin_edges"]],
            mean_lengths=[float(x) for x in doc["mean_lengths"]],
            global_mean=float(doc["global_mean"]),
        )


@dataclass
class LatencyProfile:
    ttft: float
    tpot: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.ttft) and np.isfinite(self.tpot)):
            raise ValueError("latency parameters must be finite")
        if self.ttft < 0 or self.tpot < 0:
            raise ValueError("latency parameters must be >= 0")

    def to_json(self) -> dict:
        return {"ttft": self.ttft, "tpot": self.tpot, "residual_rms": self.residual_rms}

    @classmethod
    def from_json(cls, doc: dict) -> "LatencyProfile":
        return cls(float(doc["ttft"]), float(doc["tpot"]), float(doc.get("residual_rms", 0.0)))


def calibrate_verbosity(
    anchor_records: list[tuple[str, float, float]], K: int = 10, model_id: str = ""
) -> VerbosityTable:
    """Build the K-bin verbosity lookup from (item_id, score, output_length) rows.

    Bins are equal-frequency: records sorted by complexity score are split
    into K contiguous chunks whose sizes differ by at most one, with edges at
    the midpoints between adjacent chunk boundary scores.  Bins left empty by
    tied scores inherit the global mean.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(anchor_records) < max(K, 2):
        raise ValueError(f"need at least {max(K, 2)} anchor records for K={K} bins")
    scores = np.array([r[1] for r in anchor_records], dtype=float)
    lengths = np.array([r[2] for r in anchor_records], dtype=float)
    if len(set(scores.tolist())) < 2:
        raise ValueError("need at least 2 distinct complexity scores")
    order = np.argsort(scores, kind="stable")
    s_sorted, l_sorted = scores[order], lengths[order]
    n = len(s_sorted)
    global_mean = float(lengths.mean())

    sizes = [n // K + (1 if k < n % K else 0) for k in range(K)]
    bounds = np.cumsum([0] + sizes)
    edges = [float(s_sorted[0])]
    for k in range(1, K):
        lo, hi = s_sorted[bounds[k] - 1], s_sorted[bounds[k]]
        edge = 0.5 * (lo + hi)
        # tied boundary scores can collapse an edge; nudge keeps edges strict
        if edge <= edges[-1]:
            edge = np.nextafter(edges[-1], np.inf)
        edges.append(float(edge))
    top = float(s_sorted[-1])
    edges.append(top if top > edges[-1] else float(np.nextafter(edges[-1], np.inf)))

    means = []
    for k in range(K):
        chunk = l_sorted[bounds[k]:bounds[k + 1]]
        means.append(float(chunk.mean()) if chunk.size else global_mean)
    return VerbosityTable(model_id=model_id, bin_edges=edges, mean_lengths=means,
                          global_mean=global_mean)


def estimate_output_length(table: VerbosityTable, score: float) -> float:
    """Inference-free lookup of the bin mean, clamping out-of-range scores."""
    inner = np.asarray(table.bin_edges[1:-1], dtype=float)
    k = int(np.searchsorted(inner, score, side="right"))
    return float(table.mean_lengths[k])


def calibrate_latency(measurements: list[tuple[float, float]]) -> LatencyProfile:
    """OLS of observed seconds on output length; negative fits clamp at zero.

    residual_rms is computed against the clamped model, so a clamp shows up
    as fit degradation rather than being silently absorbed.
    """
    if len(measurements) < 2:
        raise ValueError("need at least 2 latency measurements")
    lengths = np.array([m[0] for m in measurements], dtype=float)
    secs = np.array([m[1] for m in measurements], dtype=float)
    if np.ptp(lengths) == 0:
        raise ValueError("degenerate design: all output lengths equal")
    slope, intercept = np.polyfit(lengths, secs, 1)
    ttft = max(float(intercept), 0.0)
    tpot = max(float(slope), 0.0)
    resid = secs - (ttft + tpot * lengths)
    return LatencyProfile(ttft=ttft, tpot=tpot,
                          residual_rms=float(np.sqrt(np.mean(resid**2))))


def estimate_latency(profile: LatencyProfile, output_length: float) -> float:
    return profile.ttft + output_length * profile.tpot
