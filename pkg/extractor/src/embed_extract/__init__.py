"""Frozen transformer CLS-token embedding extractor."""

from .extract import extract_embeddings, read_queries, write_emb_v1

__version__ = "0.1.0"
