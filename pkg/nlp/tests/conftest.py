"""Shared fixtures: a tiny randomly initialized BERT and a local vocab.

Everything runs offline; the random model exercises the full mechanics
(extraction, ablation, probing) without pretrained weights.
"""

import pytest
import torch
from transformers import BertConfig, BertForMaskedLM, BertTokenizer

WORDS = [
    "the", "a", "dog", "dogs", "cat", "cats", "game", "guard", "author",
    "pilot", "is", "are", "was", "were", "runs", "run", "hates", "hate",
    "likes", "like", "walk", "big", "bad", "old", "that", "near", "by",
    "books", "book", "smiles", "smile", "laughs", "laugh",
]
PIECES = ["##s", "##ing", "##ed", "walks"]


@pytest.fixture(scope="session")
def vocab_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS + PIECES
    path.write_text("\n".join(tokens) + "\n")
    return path


@pytest.fixture(scope="session")
def tokenizer(vocab_file):
    return BertTokenizer(str(vocab_file))


@pytest.fixture(scope="session")
def tiny_config(tokenizer):
    return BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=32,
        num_hidden_layers=4,
        num_attention_heads=4,
        intermediate_size=48,
        max_position_embeddings=64,
        attn_implementation="eager",
    )


@pytest.fixture(scope="session")
def mlm(tiny_config):
    torch.manual_seed(7)
    model = BertForMaskedLM(tiny_config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def single_head_mlm(tokenizer):
    config = BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=1,
        intermediate_size=32,
        max_position_embeddings=64,
        attn_implementation="eager",
    )
    torch.manual_seed(8)
    model = BertForMaskedLM(config)
    model.eval()
    return model


@pytest.fixture()
def random_batch(tokenizer):
    """Random token batches with ragged lengths and padding."""
    def make(n_samples, seed, max_len=20):
        gen = torch.Generator().manual_seed(seed)
        vocab = tokenizer.vocab_size
        lengths = torch.randint(4, max_len, (n_samples,), generator=gen)
        width = int(lengths.max()) + 2
        input_ids = torch.full((n_samples, width), tokenizer.pad_token_id)
        mask = torch.zeros((n_samples, width), dtype=torch.long)
        for i, n in enumerate(lengths):
            body = torch.randint(5, vocab, (int(n),), generator=gen)
            row = torch.cat([torch.tensor([tokenizer.cls_token_id]), body,
                             torch.tensor([tokenizer.sep_token_id])])
            input_ids[i, :len(row)] = row
            mask[i, :len(row)] = 1
        return input_ids, mask
    return make
