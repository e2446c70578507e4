"""Acceptance gate for the transformer-side component.

The uniform-attention criterion runs against a randomly initialized
model (patching semantics are weight-independent). The agreement-task
reproduction criteria need the pretrained base model and the published
stimulus set; they resolve these from BRAINALIGN_BERT (default
bert-base-uncased) and BRAINALIGN_AGREEMENT_STIMULI and skip with an
explicit reason when either artifact is unavailable (this sandbox has
no model hub access).
"""

import os
from pathlib import Path

import numpy as np
import pytest
import torch

from brainalign_nlp.ablate import (
    altered_parameter_names,
    apply_uniform_attention,
    parameter_checksum,
    uniform_attention_max_error,
)
from brainalign_nlp.probe import run_suite, write_outcomes

UNIFORMITY_TOL = 1e-6
TABLE_TOL = 0.02

# published base-model accuracies and item counts for the 13 conditions
BASE_EXPECTED = {
    "simple": (1.00, 120),
    "in_a_sentential_complement": (0.83, 1440),
    "short_vp_coordination": (0.89, 720),
    "long_vp_coordination": (0.98, 400),
    "across_a_prepositional_phrase": (0.85, 19440),
    "across_a_subject_relative_clause": (0.84, 9600),
    "across_an_object_relative_clause": (0.89, 19680),
    "across_an_object_relative_clause_no_that": (0.86, 19680),
    "in_an_object_relative_clause": (0.95, 15960),
    "in_an_object_relative_clause_no_that": (0.79, 15960),
    "reflexive_anaphora_simple": (0.94, 280),
    "reflexive_anaphora_in_a_sentential_complement": (0.89, 3360),
    "reflexive_anaphora_across_a_relative_clause": (0.80, 22400),
}


def check(name, ok, detail):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


class TestUniformAttentionPatch:
    def test_fifty_random_inputs(self, mlm, tokenizer, random_batch):
        layer = 1
        patched = apply_uniform_attention(mlm, layer=layer)
        worst = 0.0
        for seed in range(25):
            ids, mask = random_batch(2, seed=seed)
            worst = max(worst,
                        uniform_attention_max_error(patched, ids, mask, layer))
        skip = altered_parameter_names(mlm, layer)
        checksum_ok = (parameter_checksum(patched, exclude=skip)
                       == parameter_checksum(mlm, exclude=skip))
        check("uniform-attention-patch",
              worst <= UNIFORMITY_TOL and checksum_ok,
              f"max |p - 1/L| = {worst:.2e} over 50 inputs, "
              f"non-altered checksum identical: {checksum_ok}")


def _load_pretrained_assets():
    """Resolve the pretrained model and stimulus set, or explain why not."""
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    model_spec = os.environ.get("BRAINALIGN_BERT", "bert-base-uncased")
    stimuli = os.environ.get("BRAINALIGN_AGREEMENT_STIMULI", "")
    if not stimuli or not Path(stimuli).is_dir():
        pytest.skip(
            "agreement stimulus set not available "
            "(set BRAINALIGN_AGREEMENT_STIMULI to the directory of "
            "per-condition TSV files)"
        )
    try:
        model = AutoModelForMaskedLM.from_pretrained(
            model_spec, attn_implementation="eager")
        tokenizer = AutoTokenizer.from_pretrained(model_spec)
    except Exception as exc:
        pytest.skip(f"pretrained model {model_spec!r} unavailable in this "
                    f"environment: {exc}")
    model.eval()
    return model, tokenizer, Path(stimuli)


@pytest.mark.pretrained
class TestAgreementReproduction:
    def test_base_model_matches_published_accuracies(self):
        model, tokenizer, stimuli = _load_pretrained_assets()
        results = {r.condition: r for r in run_suite(model, tokenizer, stimuli)}
        missing = set(BASE_EXPECTED) - set(results)
        assert not missing, f"stimulus set lacks conditions {sorted(missing)}"
        rows = []
        ok = True
        for condition, (expected, count) in BASE_EXPECTED.items():
            got = results[condition].accuracy
            ok &= abs(got - expected) <= TABLE_TOL
            rows.append(f"{condition}={got:.3f}/{expected:.2f}")
        check("base-agreement-table", ok, "; ".join(rows))

    def test_uniform_variants(self, tmp_path):
        stats = pytest.importorskip("brainalign.stats")
        pl = pytest.importorskip("brainalign.pipeline")
        model, tokenizer, stimuli = _load_pretrained_assets()
        base_results = run_suite(model, tokenizer, stimuli)
        write_outcomes(base_results, tmp_path / "base.csv")
        base = pl.read_task_outcomes(tmp_path / "base.csv")

        def variant_outcomes(layer):
            patched = apply_uniform_attention(model, layer=layer)
            results = run_suite(patched, tokenizer, stimuli)
            write_outcomes(results, tmp_path / f"uni_l{layer}.csv")
            return pl.read_task_outcomes(tmp_path / f"uni_l{layer}.csv")

        uni2 = variant_outcomes(2)
        comparisons = {c.task: c for c in stats.paired_test_bh(uni2, base)}
        prep = comparisons["across_a_prepositional_phrase"]
        l2_ok = (abs(prep.mean_variant - 0.93) <= TABLE_TOL
                 and prep.significant and prep.mean_variant > prep.mean_base)

        uni11 = variant_outcomes(11)
        comp11 = stats.paired_test_bh(uni11, base)
        par_or_worse = sum(
            1 for c in comp11
            if c.mean_variant <= c.mean_base
            or not (c.significant and c.mean_variant > c.mean_base)
        )
        l11_ok = par_or_worse >= 11
        check("uniform-variant-agreement", l2_ok and l11_ok,
              f"uniform-L2 prepositional {prep.mean_variant:.3f} "
              f"(significant={prep.significant}), "
              f"uniform-L11 par-or-worse on {par_or_worse}/13")
