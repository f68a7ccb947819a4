"""Semantic embedding sources and the EMB v1 interchange format.

Two sources satisfy the predictor's semantic-vector input: a self-contained
deterministic feature-hashing bag-of-words embedder, and precomputed vectors
read from an EMB v1 file (typically produced by the external extractor tool).

EMB v1 layout: a header line ``EMB v1 <count> <d_sem>`` followed by one
record per query, ``query_id<TAB><base64 little-endian float32 row>``.
"""

from __future__ import annotations

import base64
import hashlib
import re
from pathlib import Path

import numpy as np

HASH_DIM = 64
_WORD_RE = re.compile(r"[a-z0-9]+")


def hash_embedding(text: str, d_sem: int = HASH_DIM) -> np.ndarray:
    """Deterministic signed bag-of-words hashing embedder, L2-normalized.

    Each lowercased alphanumeric token lands in bucket sha1(token) % d_sem
    with a sign from the next hash bit, so the map is stable across runs and
    platforms.  Empty text returns the zero vector.
    """
    vec = np.zeros(d_sem)
    for tok in _WORD_RE.findall(text.lower()):
        h = int.from_bytes(hashlib.sha1(tok.encode()).digest()[:8], "little")
        idx = h % d_sem
        sign = 1.0 if (h >> 32) & 1 else -1.0
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def write_embeddings(path: str | Path, records: list[tuple[str, np.ndarray]]) -> None:
    if records:
        d_sem = len(records[0][1])
    else:
        d_sem = 0
    lines = [f"EMB v1 {len(records)} {d_sem}"]
    for query_id, vec in records:
        row = np.asarray(vec, dtype="<f4")
        if row.ndim != 1 or row.size != d_sem:
            raise ValueError(f"record {query_id!r}: dimension drift ({row.size} != {d_sem})")
        lines.append(f"{query_id}\t{base64.b64encode(row.tobytes()).decode('ascii')}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty embedding file")
    m = re.fullmatch(r"EMB v1 (\d+) (\d+)", lines[0].strip())
    if not m:
        raise ValueError(f"{path}: bad EMB v1 header: {lines[0]!r}")
    count, d_sem = int(m.group(1)), int(m.group(2))
    out: dict[str, np.ndarray] = {}
    for ln_no, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        try:
            query_id, payload = ln.split("\t", 1)
        except ValueError:
            raise ValueError(f"{path}:{ln_no}: malformed record") from None
        row = np.frombuffer(base64.b64decode(payload), dtype="<f4").astype(float)
        if row.size != d_sem:
            raise ValueError(f"{path}:{ln_no}: vector length {row.size}, header says {d_sem}")
        out[query_id] = row
    if len(out) != count:
        raise ValueError(f"{path}: header count {count}, found {len(out)} records")
    return out
