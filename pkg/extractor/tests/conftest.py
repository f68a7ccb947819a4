import pytest
import torch
from transformers import DistilBertConfig, DistilBertModel, DistilBertTokenizerFast

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "an", "what", "is", "of", "to", "how", "why", "who",
    "cat", "dog", "sum", "integral", "capital", "france", "code",
    "write", "poem", "sea", "2", "x", "##s", "##ing", "##ed",
]


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small randomly initialized encoder saved locally; no downloads."""
    root = tmp_path_factory.mktemp("tiny-encoder")
    (root / "vocab.txt").write_text("\n".join(VOCAB))
    tokenizer = DistilBertTokenizerFast(vocab_file=str(root / "vocab.txt"),
                                        do_lower_case=True)
    config = DistilBertConfig(vocab_size=len(VOCAB), dim=32, hidden_dim=64,
                              n_layers=2, n_heads=2, max_position_embeddings=64)
    torch.manual_seed(0)
    model = DistilBertModel(config)
    model.save_pretrained(root)
    tokenizer.save_pretrained(root)
    return str(root)
