"""Masked-verb agreement probes.

Each stimulus item is a sentence with one masked verb position plus the
correctly and incorrectly numbered verb forms. The pretrained
language-modeling head scores the masked position and the item counts
as correct when the raw logit of the correct form beats the incorrect
one (ties score 0; softmax is monotone, so logits decide identically).
Items whose verbs tokenize to more than one piece are excluded and
counted, since single-token targets are what the scoring compares.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import StimulusError


@dataclass(frozen=True)
class ProbeItem:
    condition: str
    item_id: str
    sentence: str  # contains exactly one [MASK] slot
    correct: str
    incorrect: str


@dataclass(frozen=True)
class ProbeResult:
    condition: str
    n_items: int
    n_excluded: int
    outcomes: np.ndarray  # per-item 0/1, aligned with items
    items: tuple[ProbeItem, ...]

    @property
    def accuracy(self) -> float:
        return float(self.outcomes.mean()) if self.outcomes.size else float("nan")


def load_stimuli(directory: Path | str) -> list[ProbeItem]:
    """One TSV per condition: ``sentence<TAB>correct<TAB>incorrect``."""
    directory = Path(directory)
    files = sorted(directory.glob("*.tsv"))
    if not files:
        raise StimulusError(f"{directory}: no stimulus files (*.tsv)")
    items = []
    for path in files:
        condition = path.stem
        for lineno, line in enumerate(path.read_text().splitlines()):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise StimulusError(f"{path}:{lineno + 1}: expected 3 columns")
            sentence, correct, incorrect = (p.strip() for p in parts)
            if sentence.count("[MASK]") != 1:
                raise StimulusError(
                    f"{path}:{lineno + 1}: need exactly one [MASK] slot"
                )
            items.append(ProbeItem(condition=condition,
                                   item_id=f"{condition}-{lineno:05d}",
                                   sentence=sentence, correct=correct,
                                   incorrect=incorrect))
    return items


def _single_token_id(tokenizer, verb: str) -> int | None:
    pieces = tokenizer.tokenize(verb)
    if len(pieces) != 1:
        return None
    token_id = tokenizer.convert_tokens_to_ids(pieces)[0]
    if token_id == tokenizer.unk_token_id:
        return None
    return token_id


@torch.no_grad()
def score_item(model, tokenizer, item: ProbeItem) -> int:
    """1 iff the correct verb outscores the incorrect one; ties are 0."""
    correct_id = _single_token_id(tokenizer, item.correct)
    incorrect_id = _single_token_id(tokenizer, item.incorrect)
    if correct_id is None or incorrect_id is None:
        raise StimulusError(f"{item.item_id}: verb is not a single vocab item")
    logits = _mask_logits(model, tokenizer, [item])[0]
    return int(logits[correct_id] > logits[incorrect_id])


@torch.no_grad()
def _mask_logits(model, tokenizer, items, batch_size: int = 32):
    """Language-model logits at the masked position, one row per item."""
    model.eval()
    device = next(model.parameters()).device
    rows = []
    for b0 in range(0, len(items), batch_size):
        batch = items[b0:b0 + batch_size]
        texts = [it.sentence.replace("[MASK]", tokenizer.mask_token)
                 for it in batch]
        enc = tokenizer(texts, return_tensors="pt", padding=True)
        enc = {k: v.to(device) for k, v in enc.items()}
        logits = model(**enc).logits
        is_mask = enc["input_ids"] == tokenizer.mask_token_id
        if not (is_mask.sum(dim=1) == 1).all():
            raise StimulusError("each item must contain exactly one mask token")
        mask_pos = is_mask.nonzero()
        for i in range(len(batch)):
            rows.append(logits[mask_pos[i, 0], mask_pos[i, 1]].cpu())
    return rows


def run_suite(model, tokenizer, stimuli_dir: Path | str,
              batch_size: int = 32) -> list[ProbeResult]:
    """Score every condition; excluded items are counted, never scored."""
    all_items = load_stimuli(stimuli_dir)
    conditions: dict[str, list[ProbeItem]] = {}
    for item in all_items:
        conditions.setdefault(item.condition, []).append(item)

    results = []
    for condition in sorted(conditions):
        kept, excluded = [], 0
        pairs = []
        for item in conditions[condition]:
            cid = _single_token_id(tokenizer, item.correct)
            iid = _single_token_id(tokenizer, item.incorrect)
            if cid is None or iid is None:
                excluded += 1
                continue
            kept.append(item)
            pairs.append((cid, iid))
        outcomes = np.zeros(len(kept), dtype=np.int64)
        if kept:
            logit_rows = _mask_logits(model, tokenizer, kept, batch_size)
            for i, (row, (cid, iid)) in enumerate(zip(logit_rows, pairs)):
                outcomes[i] = int(row[cid] > row[iid])
        results.append(ProbeResult(condition=condition, n_items=len(kept),
                                   n_excluded=excluded, outcomes=outcomes,
                                   items=tuple(kept)))
    return results


def write_outcomes(results: list[ProbeResult], path: Path | str) -> None:
    """Outcome CSV consumed by the alignment engine's task report."""
    lines = ["condition,item_id,outcome,correct_verb,incorrect_verb\n"]
    for result in results:
        for item, outcome in zip(result.items, result.outcomes):
            lines.append(f"{item.condition},{item.item_id},{int(outcome)},"
                         f"{item.correct},{item.incorrect}\n")
    Path(path).write_text("".join(lines))


def write_summary(results: list[ProbeResult], path: Path | str) -> None:
    lines = ["condition,accuracy,count,excluded\n"]
    for r in results:
        lines.append(f"{r.condition},{r.accuracy:.4f},{r.n_items},{r.n_excluded}\n")
    Path(path).write_text("".join(lines))
