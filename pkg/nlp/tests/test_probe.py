"""Probe tests: scoring semantics, exclusions, stub oracles, interchange."""

import types

import numpy as np
import pytest
import torch

from brainalign_nlp import StimulusError
from brainalign_nlp.probe import (
    ProbeItem,
    load_stimuli,
    run_suite,
    score_item,
    write_outcomes,
    write_summary,
)


def write_condition(directory, name, rows):
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"{sentence}\t{good}\t{bad}" for sentence, good, bad in rows]
    (directory / f"{name}.tsv").write_text("\n".join(lines) + "\n")


@pytest.fixture()
def stimuli_dir(tmp_path):
    root = tmp_path / "stimuli"
    write_condition(root, "simple", [
        ("the dog [MASK] big", "is", "are"),
        ("the dogs [MASK] big", "are", "is"),
        ("the cat [MASK] old", "is", "are"),
    ])
    write_condition(root, "across_phrase", [
        ("the game by the guard [MASK] bad", "is", "are"),
        ("the books near the cat [MASK] old", "are", "is"),
    ])
    return root


class FixedLogitsModel(torch.nn.Module):
    """Stub language model: the same logits vector at every position."""

    def __init__(self, logits):
        super().__init__()
        self.logits_vector = torch.nn.Parameter(torch.as_tensor(logits,
                                                                dtype=torch.float32))

    def forward(self, input_ids=None, attention_mask=None, **kwargs):
        batch, seq = input_ids.shape
        logits = self.logits_vector.expand(batch, seq, -1)
        return types.SimpleNamespace(logits=logits)


class TestLoadStimuli:
    def test_reads_conditions(self, stimuli_dir):
        items = load_stimuli(stimuli_dir)
        assert {i.condition for i in items} == {"simple", "across_phrase"}
        assert sum(i.condition == "simple" for i in items) == 3

    def test_empty_directory(self, tmp_path):
        with pytest.raises(StimulusError):
            load_stimuli(tmp_path)

    def test_bad_columns(self, tmp_path):
        (tmp_path / "bad.tsv").write_text("only two\tcolumns\n")
        with pytest.raises(StimulusError):
            load_stimuli(tmp_path)

    def test_mask_count_enforced(self, tmp_path):
        write_condition(tmp_path, "m0", [("no mask here", "is", "are")])
        with pytest.raises(StimulusError):
            load_stimuli(tmp_path)


class TestScoring:
    def test_outcome_follows_logit_comparison(self, tokenizer):
        vocab = tokenizer.vocab_size
        logits = torch.zeros(vocab)
        is_id = tokenizer.convert_tokens_to_ids(["is"])[0]
        are_id = tokenizer.convert_tokens_to_ids(["are"])[0]
        logits[is_id] = 2.0
        logits[are_id] = 1.0
        model = FixedLogitsModel(logits).eval()
        item = ProbeItem("simple", "simple-0", "the dog [MASK] big",
                         "is", "are")
        assert score_item(model, tokenizer, item) == 1
        flipped = ProbeItem("simple", "simple-1", "the dog [MASK] big",
                            "are", "is")
        assert score_item(model, tokenizer, flipped) == 0

    def test_exact_tie_scores_zero(self, tokenizer):
        model = FixedLogitsModel(torch.zeros(tokenizer.vocab_size)).eval()
        item = ProbeItem("simple", "simple-0", "the dog [MASK] big",
                         "is", "are")
        assert score_item(model, tokenizer, item) == 0

    def test_random_head_near_half(self, tokenizer):
        """A fixed random logit vector is right half the time over random
        verb-form pairs (the stub-model chance oracle)."""
        gen = torch.Generator().manual_seed(42)
        model = FixedLogitsModel(torch.randn(tokenizer.vocab_size,
                                             generator=gen)).eval()
        rng = np.random.default_rng(0)
        verbs = ["is", "are", "was", "were", "runs", "run", "hates", "hate",
                 "likes", "like", "smiles", "smile", "laughs", "laugh"]
        wins = 0
        n = 400
        for _ in range(n):
            good, bad = rng.choice(verbs, size=2, replace=False)
            item = ProbeItem("c", "c-0", "the dog [MASK] big", good, bad)
            wins += score_item(model, tokenizer, item)
        assert abs(wins / n - 0.5) < 0.1


class TestRunSuite:
    def test_deterministic(self, mlm, tokenizer, stimuli_dir):
        a = run_suite(mlm, tokenizer, stimuli_dir)
        b = run_suite(mlm, tokenizer, stimuli_dir)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.outcomes, rb.outcomes)

    def test_accuracy_is_mean_of_outcomes(self, mlm, tokenizer, stimuli_dir):
        for result in run_suite(mlm, tokenizer, stimuli_dir):
            assert result.accuracy == result.outcomes.mean()

    def test_multi_piece_verbs_excluded(self, mlm, tokenizer, tmp_path):
        root = tmp_path / "stimuli"
        write_condition(root, "mixed", [
            ("the dog [MASK] big", "is", "are"),
            ("the dog [MASK] by", "walking", "walk"),  # walking = 2 pieces
        ])
        result = run_suite(mlm, tokenizer, root)[0]
        assert result.n_items == 1
        assert result.n_excluded == 1

    def test_batching_matches_single_items(self, mlm, tokenizer, stimuli_dir):
        items = load_stimuli(stimuli_dir)
        suite = {r.condition: r for r in run_suite(mlm, tokenizer, stimuli_dir,
                                                   batch_size=2)}
        for item in items:
            single = score_item(mlm, tokenizer, item)
            result = suite[item.condition]
            idx = [i.item_id for i in result.items].index(item.item_id)
            assert result.outcomes[idx] == single


class TestInterchange:
    def test_outcomes_feed_alignment_engine_stats(self, mlm, tokenizer,
                                                  stimuli_dir, tmp_path):
        """Base vs base through the engine's paired test: nothing significant."""
        pl = pytest.importorskip("brainalign.pipeline")
        stats = pytest.importorskip("brainalign.stats")
        results = run_suite(mlm, tokenizer, stimuli_dir)
        out_csv = tmp_path / "outcomes.csv"
        write_outcomes(results, out_csv)
        outcomes = pl.read_task_outcomes(out_csv)
        assert set(outcomes) == {"simple", "across_phrase"}
        comparisons = stats.paired_test_bh(outcomes, outcomes)
        assert not any(c.significant for c in comparisons)

    def test_summary_csv(self, mlm, tokenizer, stimuli_dir, tmp_path):
        results = run_suite(mlm, tokenizer, stimuli_dir)
        path = tmp_path / "summary.csv"
        write_summary(results, path)
        rows = path.read_text().splitlines()
        assert rows[0] == "condition,accuracy,count,excluded"
        assert len(rows) == 3
