"""embed-extract: queries JSONL -> EMB v1 vector file.

    embed-extract queries.jsonl --model distilbert-base-uncased --out vectors.emb
"""

from __future__ import annotations

import argparse
import sys

from .extract import extract_embeddings


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="embed-extract")
    ap.add_argument("input", help="JSONL with one {id, text} object per line")
    ap.add_argument("--model", required=True,
                    help="transformer model name or local checkpoint directory")
    ap.add_argument("--out", required=True, help="output EMB v1 path")
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--max-length", type=int, default=128)
    args = ap.parse_args(argv)

    count = extract_embeddings(args.input, args.model, args.out,
                               batch_size=args.batch_size, max_length=args.max_length)
    print(f"wrote {count} embeddings -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
