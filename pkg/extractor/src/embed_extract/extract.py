"""Batch extraction of frozen [CLS] hidden states into EMB v1 files.

The encoder runs in eval mode with no gradients and no fine-tuning; inputs
are padded to a fixed length so an identical text always produces a bitwise
identical vector no matter which batch it lands in.  Duplicate texts are
encoded once and fanned back out.

EMB v1 layout (shared with the router's reader): a header line
``EMB v1 <count> <d_sem>`` followed by ``query_id<TAB><base64 little-endian
float32 row>`` records, one per input line, order preserved.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np


class MalformedLineError(ValueError):
    def __init__(self, path, line_no, reason):
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


def read_queries(path: str | Path) -> list[tuple[str, str]]:
    """Parse the {"id", "text"} JSONL corpus, keeping input order."""
    out = []
    for ln_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLineError(path, ln_no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict) or "id" not in doc or "text" not in doc:
            raise MalformedLineError(path, ln_no, "record needs 'id' and 'text' fields")
        out.append((str(doc["id"]), str(doc["text"])))
    return out


def write_emb_v1(path: str | Path, records: list[tuple[str, np.ndarray]]) -> None:
    d_sem = len(records[0][1]) if records else 0
    lines = [f"EMB v1 {len(records)} {d_sem}"]
    for query_id, vec in records:
        row = np.asarray(vec, dtype="<f4")
        if row.ndim != 1 or row.size != d_sem:
            raise ValueError(
                f"dimension drift at record {query_id!r}: {row.size} != {d_sem}, aborting"
            )
        lines.append(f"{query_id}\t{base64.b64encode(row.tobytes()).decode('ascii')}")
    Path(path).write_text("\n".join(lines) + "\n")


def encode_cls(texts: list[str], model, tokenizer, batch_size: int = 16,
               max_length: int = 128) -> np.ndarray:
    """Frozen-encoder [CLS] vectors for a list of texts, one row each."""
    import torch

    model.eval()
    max_length = min(max_length, getattr(model.config, "max_position_embeddings", max_length))
    rows = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            batch = texts[start : start + batch_size]
            enc = tokenizer(batch, padding="max_length", truncation=True,
                            max_length=max_length, return_tensors="pt")
            hidden = model(**enc).last_hidden_state  # (B, L, d)
            rows.append(hidden[:, 0, :].cpu().numpy().astype("<f4"))
    if not rows:
        return np.zeros((0, 0), dtype="<f4")
    out = np.vstack(rows)
    widths = {r.shape[1] for r in rows}
    if len(widths) != 1:
        raise ValueError(f"dimension drift across batches: {sorted(widths)}, aborting")
    return out


def extract_embeddings(
    input_path: str | Path,
    model_name_or_path: str,
    output_path: str | Path,
    batch_size: int = 16,
    max_length: int = 128,
) -> int:
    """Run the full pipeline; returns the number of records written."""
    from transformers import AutoModel, AutoTokenizer

    queries = read_queries(input_path)
    model = AutoModel.from_pretrained(model_name_or_path)
    tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)

    # encode each distinct text once: duplicates get bitwise-identical rows
    unique_texts = sorted({text for _, text in queries})
    vectors = encode_cls(unique_texts, model, tokenizer, batch_size=batch_size,
                         max_length=max_length)
    by_text = {text: vectors[i] for i, text in enumerate(unique_texts)}
    write_emb_v1(output_path, [(qid, by_text[text]) for qid, text in queries])
    return len(queries)
