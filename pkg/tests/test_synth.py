import numpy as np
import pytest

from ordershap import (
    ConfigurationError,
    DataError,
    GroundTruth,
    SyntheticDatasetSpec,
    UndefinedCorrelationError,
    generate_dataset,
    pearson,
    select_w1,
    task_rule_model,
    transform_append_phrase,
    transform_hans_star,
    transform_prepend_symbol,
)
from ordershap.synth import (
    NEGATION_PHRASES,
    PREPEND_SYMBOLS,
    read_dataset,
    write_dataset,
)


class TestGenerateDataset:
    def test_counts_balance_and_label_fidelity(self):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=200, length=8,
                                    count=1000, seed=7)
        ds = generate_dataset(spec)
        assert len(ds.sequences) == 1000
        positives = sum(ds.labels)
        assert abs(positives / 1000 - 0.5) <= 0.01
        model = task_rule_model("task1")
        for seq, label in zip(ds.sequences, ds.labels):
            assert len(seq) == 8
            assert model.label(seq) == label

    def test_positives_begin_with_duplicate(self):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=50, length=6,
                                    count=400, seed=1)
        ds = generate_dataset(spec)
        for seq, label in zip(ds.sequences, ds.labels):
            if label:
                assert seq[0] == seq[1]

    def test_task3_positives_contain_duplicate(self):
        spec = SyntheticDatasetSpec(task="task3", vocab_size=30, length=6,
                                    count=300, seed=3)
        ds = generate_dataset(spec)
        model = task_rule_model("task3")
        for seq, label in zip(ds.sequences, ds.labels):
            assert model.label(seq) == label

    def test_vocab_equal_length_still_generates_negatives(self):
        spec = SyntheticDatasetSpec(task="task3", vocab_size=6, length=6,
                                    count=100, seed=2)
        ds = generate_dataset(spec)
        assert 0 in ds.labels

    def test_vocab_below_length_rejected(self):
        with pytest.raises(ConfigurationError):
            SyntheticDatasetSpec(task="task3", vocab_size=4, length=6, count=10)

    def test_deterministic_per_seed(self, tmp_path):
        spec = SyntheticDatasetSpec(task="task2", vocab_size=40, length=5,
                                    count=200, seed=11)
        a, b = generate_dataset(spec), generate_dataset(spec)
        pa, pb = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_dataset(a, pa)
        write_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_roundtrip_file_format(self, tmp_path):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=20, length=4,
                                    count=50, seed=0)
        ds = generate_dataset(spec)
        path = tmp_path / "ds.tsv"
        write_dataset(ds, path)
        back = read_dataset(path)
        assert len(back) == 50
        label, toks = back[0]
        assert label in (0, 1) and len(toks) == 4

    def test_split_sizes(self):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=20, length=4,
                                    count=200, test_fraction=0.01, seed=0)
        train, test = generate_dataset(spec).split()
        assert len(train.sequences) == 198 and len(test.sequences) == 2


class TestSelectW1:
    def test_all_selected_begin_with_duplicate(self):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=50, length=6,
                                    count=400, seed=5)
        w1 = select_w1(generate_dataset(spec), 100)
        assert len(w1) == 100
        for seq in w1:
            assert seq[0] == seq[1]

    def test_cross_task_filtering(self):
        # Task-3 data filtered by the Task-1 rule stays usable across models
        spec = SyntheticDatasetSpec(task="task3", vocab_size=10, length=5,
                                    count=2000, seed=6)
        w1 = select_w1(generate_dataset(spec), 5)
        for seq in w1:
            assert task_rule_model("task1").label(seq) == 1
            assert task_rule_model("task3").label(seq) == 1

    def test_shortfall_reported(self):
        spec = SyntheticDatasetSpec(task="task1", vocab_size=20, length=4,
                                    count=20, seed=0)
        ds = generate_dataset(spec)
        with pytest.raises(DataError, match="short by"):
            select_w1(ds, 1000)


class TestPearson:
    def test_perfect_and_negated(self):
        truth = GroundTruth.for_task("task1", 4)
        assert pearson(truth.vector(), truth) == pytest.approx(1.0)
        assert pearson(-truth.vector(), truth) == pytest.approx(-1.0)

    def test_occurrence_scope(self):
        truth = GroundTruth.for_task("task3", 4)
        values = np.zeros(8)
        values[:2] = 1.0
        assert pearson(values, truth, "occurrence_only") == pytest.approx(1.0)

    def test_zero_variance_rejected(self):
        truth = GroundTruth.for_task("task1", 4)
        with pytest.raises(UndefinedCorrelationError):
            pearson(np.zeros(8), truth)

    def test_dimension_mismatch(self):
        truth = GroundTruth.for_task("task1", 4)
        with pytest.raises(DataError):
            pearson(np.zeros(6), truth)

    def test_range(self):
        truth = GroundTruth.for_task("task2", 4)
        rng = np.random.default_rng(0)
        for _ in range(25):
            r = pearson(rng.normal(size=8), truth)
            assert -1.0 <= r <= 1.0

    def test_task_truths(self):
        t1 = GroundTruth.for_task(1, 8)
        assert t1.occurrence_truth[:2] == (1.0, 1.0)
        assert t1.order_truth[:2] == (1.0, 1.0)
        assert sum(t1.order_truth) == 2.0
        t3 = GroundTruth.for_task(3, 8)
        assert sum(t3.order_truth) == 0.0


class TestHansStar:
    def test_noun_swap_pair(self):
        premise = "The doctors visited the lawyers"
        hypothesis = "The lawyers visited the doctors"
        assert transform_hans_star(premise, hypothesis) == (premise, premise)

    def test_identical_inputs_unchanged(self):
        pair = ("same sentence", "same sentence")
        assert transform_hans_star(*pair) == pair

    def test_output_sides_always_equal(self):
        out = transform_hans_star("a b c", "x y z")
        assert out[0] == out[1]

    def test_empty_premise_rejected(self):
        with pytest.raises(DataError):
            transform_hans_star("", "anything")


class TestAppendPhrase:
    def test_end_keeps_terminal_punctuation(self):
        got = transform_append_phrase("The movie is good.", 2, "end")
        assert got == "The movie is good not gonna lie."

    def test_end_with_comma(self):
        got = transform_append_phrase("The movie is good.", 2, "end_with_comma")
        assert got == "The movie is good, not gonna lie."

    def test_begin_prepends_untouched(self):
        got = transform_append_phrase("The movie is good.", 2, "begin")
        assert got == "not gonna lie The movie is good."

    def test_no_terminal_punctuation(self):
        got = transform_append_phrase("The movie is good", 0, "end")
        assert got == "The movie is good not as expected"

    def test_all_phrases_have_negation_words(self):
        assert len(NEGATION_PHRASES) == 5
        for phrase in NEGATION_PHRASES:
            assert "not" in phrase or "never" in phrase

    def test_unknown_phrase_id(self):
        with pytest.raises(ConfigurationError):
            transform_append_phrase("x", 5, "end")

    def test_injective_on_sentences(self):
        outs = {transform_append_phrase(s, 1, "end") for s in ("a.", "b.", "a b.")}
        assert len(outs) == 3


class TestPrependSymbol:
    def test_dot_example(self):
        got = transform_prepend_symbol("the cat <mask> cute", ".")
        assert got == ". the cat <mask> cute"

    def test_unk_token(self):
        got = transform_prepend_symbol("the cat", "<unk>")
        assert got.startswith("<unk> ")

    def test_round_trip_single_char(self):
        sentence = "any sentence at all"
        got = transform_prepend_symbol(sentence, "#")
        assert got[2:] == sentence

    def test_symbol_list_is_the_contract(self):
        assert len(PREPEND_SYMBOLS) == 23
        assert "<unk>" in PREPEND_SYMBOLS
        with pytest.raises(ConfigurationError):
            transform_prepend_symbol("x", "%")
