"""Uniform-attention ablation.

Zeroing one layer's query and key projection weights makes every
pre-softmax score constant, so attention probabilities come out exactly
1/L over the L unmasked positions; the value projection is replaced by
the identity so each head passes its input slice through. Exactly one
layer is altered per variant; biases and every other parameter stay
bit-identical to the source model.
"""

from __future__ import annotations

import copy
import hashlib

import torch

from . import NlpConfigError


def _encoder_layers(model):
    base = getattr(model, "bert", model)
    try:
        return base.encoder.layer
    except AttributeError as exc:
        raise NlpConfigError(
            "model does not expose a bert-style encoder.layer stack"
        ) from exc


def _self_attention(model, layer: int):
    layers = _encoder_layers(model)
    if layer < 0 or layer >= len(layers):
        raise NlpConfigError(
            f"layer {layer} outside encoder depth {len(layers)}"
        )
    return layers[layer].attention.self


def altered_parameter_names(model, layer: int) -> set[str]:
    """The three weight tensors the ablation replaces."""
    target = _self_attention(model, layer)
    owned = {id(target.query.weight), id(target.key.weight),
             id(target.value.weight)}
    return {name for name, p in model.named_parameters() if id(p) in owned}


def apply_uniform_attention(model, layer: int,
                            value_mode: str = "full"):
    """Return a copy of ``model`` with uniform attention at one layer.

    ``value_mode`` "full" writes the d_model x d_model identity into the
    assembled value projection (equivalently: each head's slice of the
    identity). "per-head" is the literal head-sized identity and is only
    well-formed for single-head models.
    """
    if value_mode not in ("full", "per-head"):
        raise NlpConfigError(f"unknown value mode {value_mode!r}")
    patched = copy.deepcopy(model)
    att = _self_attention(patched, layer)
    d_out, d_in = att.value.weight.shape
    if d_out != d_in:
        raise NlpConfigError(
            f"value projection is {d_out}x{d_in}; identity replacement "
            "needs a square projection"
        )
    if value_mode == "per-head" and att.num_attention_heads != 1:
        raise NlpConfigError(
            f"head size {att.attention_head_size} != hidden size {d_in}: "
            "the literal per-head identity is incompatible with "
            f"{att.num_attention_heads} heads; use value_mode='full'"
        )
    with torch.no_grad():
        att.query.weight.zero_()
        att.key.weight.zero_()
        att.value.weight.copy_(torch.eye(d_in, dtype=att.value.weight.dtype))
    patched.eval()
    return patched


def parameter_checksum(model, exclude: set[str] = frozenset()) -> str:
    """SHA-256 over all parameters (by sorted name) except ``exclude``."""
    digest = hashlib.sha256()
    for name, param in sorted(model.named_parameters()):
        if name in exclude:
            continue
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@torch.no_grad()
def uniform_attention_max_error(model, input_ids, attention_mask,
                                layer: int) -> float:
    """max |p - 1/L| at the given layer over real (unmasked) positions."""
    model.eval()
    out = model(input_ids=input_ids, attention_mask=attention_mask,
                output_attentions=True)
    probs = out.attentions[layer]
    worst = 0.0
    for b in range(input_ids.shape[0]):
        n_real = int(attention_mask[b].sum())
        sub = probs[b, :, :n_real, :n_real]
        worst = max(worst, float((sub - 1.0 / n_real).abs().max()))
    return worst
