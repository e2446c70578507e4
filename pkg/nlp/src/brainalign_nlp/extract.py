"""Context-window representation extraction.

For word w_n the row is the layer-l state computed after passing the
most recent k words (w_{n-k+1}, .., w_n) through the network; positions
earlier than k-1 use the available prefix instead of padding, and are
flagged in the sidecar. Wordpieces of one word are mean-pooled into the
word vector. Layer 0 is the embedding output, so (k=1, l=0) yields a
context-free token embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import NlpConfigError, StimulusError
from .io import write_feature_matrix


@dataclass(frozen=True)
class ExtractionSpec:
    """What to extract: layers, window size and window pooling.

    ``pooling`` picks the row representation: "last-token" keeps the
    final word's vector, "mean" averages the word vectors over the
    window. Wordpiece-to-word pooling is always the mean.
    """

    model_name: str
    layers: tuple[int, ...]
    context_length: int
    pooling: str = "last-token"
    dataset_id: str = ""
    batch_size: int = 16

    def __post_init__(self):
        if self.context_length < 1:
            raise NlpConfigError("context_length must be >= 1")
        if self.pooling not in ("last-token", "mean"):
            raise NlpConfigError(f"unknown pooling {self.pooling!r}")
        if not self.layers:
            raise NlpConfigError("no layers requested")


def _word_pieces(tokenizer, words: list[str]) -> list[list[int]]:
    pieces = []
    for n, word in enumerate(words):
        toks = tokenizer.tokenize(word)
        if not toks:
            raise StimulusError(f"word {n} ({word!r}) tokenizes to zero pieces")
        pieces.append(tokenizer.convert_tokens_to_ids(toks))
    return pieces


def _encoder_depth(model) -> int:
    return model.config.num_hidden_layers


@torch.no_grad()
def extract_features(words: list[str], spec: ExtractionSpec, model,
                     tokenizer) -> dict[int, np.ndarray]:
    """Per requested layer, the (n_words x hidden) feature matrix."""
    if not words:
        raise StimulusError("empty word sequence")
    depth = _encoder_depth(model)
    bad = [l for l in spec.layers if l < 0 or l > depth]
    if bad:
        raise NlpConfigError(f"layers {bad} outside [0, {depth}]")
    model.eval()
    device = next(model.parameters()).device
    pieces = _word_pieces(tokenizer, words)
    cls_id = tokenizer.cls_token_id
    sep_id = tokenizer.sep_token_id
    pad_id = tokenizer.pad_token_id
    k = spec.context_length

    # window n covers words [start_n, n]; record the piece span per word
    jobs = []
    for n in range(len(words)):
        start = max(0, n - k + 1)
        ids = [cls_id]
        spans = []
        for w in range(start, n + 1):
            spans.append((len(ids), len(ids) + len(pieces[w])))
            ids.extend(pieces[w])
        ids.append(sep_id)
        jobs.append((ids, spans))

    hidden = model.config.hidden_size
    out = {l: np.empty((len(words), hidden), dtype=np.float32)
           for l in spec.layers}
    for b0 in range(0, len(jobs), spec.batch_size):
        batch = jobs[b0:b0 + spec.batch_size]
        width = max(len(ids) for ids, _ in batch)
        input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
        mask = torch.zeros((len(batch), width), dtype=torch.long)
        for i, (ids, _) in enumerate(batch):
            input_ids[i, :len(ids)] = torch.tensor(ids)
            mask[i, :len(ids)] = 1
        result = model(input_ids=input_ids.to(device),
                       attention_mask=mask.to(device),
                       output_hidden_states=True)
        for l in spec.layers:
            states = result.hidden_states[l]
            for i, (_, spans) in enumerate(batch):
                word_vecs = torch.stack(
                    [states[i, a:b].mean(dim=0) for a, b in spans])
                if spec.pooling == "last-token":
                    row = word_vecs[-1]
                else:
                    row = word_vecs.mean(dim=0)
                out[l][b0 + i] = row.cpu().numpy()
    return out


def extract_to_files(words: list[str], spec: ExtractionSpec, model, tokenizer,
                     out_dir: Path | str) -> list[Path]:
    """Run extraction and write one BAFM file per requested layer."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = extract_features(words, spec, model, tokenizer)
    short_rows = list(range(min(spec.context_length - 1, len(words))))
    written = []
    for layer, values in sorted(features.items()):
        path = out_dir / f"features_l{layer}_k{spec.context_length}.bafm"
        write_feature_matrix(
            values, path, model_name=spec.model_name, layer=layer,
            context_length=spec.context_length, dataset_id=spec.dataset_id,
            extra={"pooling": spec.pooling,
                   "wordpiece_pooling": "mean",
                   "short_window_rows": short_rows},
        )
        written.append(path)
    return written
