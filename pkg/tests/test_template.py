import collections

import pytest

from synthnotes.corpus import read_raw_corpus
from synthnotes.embeddings import read_benchmark
from synthnotes.template import (
    SECTION_HEADERS,
    make_nli_examples,
    make_similarity_benchmark,
    make_template_corpus,
    surname_pool,
    write_template_bundle,
)
from synthnotes.utility import read_nli_jsonl


class TestCorpusGrammar:
    def test_deterministic_under_seed(self):
        assert make_template_corpus(1, 50) == make_template_corpus(1, 50)
        assert make_template_corpus(1, 50) != make_template_corpus(2, 50)

    def test_every_note_has_ordered_section_headers(self, tmp_path):
        path = tmp_path / "raw.txt"
        path.write_text(make_template_corpus(1, 100), encoding="utf-8")
        corpus = read_raw_corpus(path)
        assert len(corpus) == 100
        for note in corpus:
            tokens = note.tokens
            positions = [tokens.index(h) for h in SECTION_HEADERS]
            assert positions == sorted(positions)

    def test_word_count_scales_linearly(self, tmp_path):
        sizes = {}
        for n in (200, 400):
            path = tmp_path / f"{n}.txt"
            path.write_text(make_template_corpus(3, n), encoding="utf-8")
            sizes[n] = read_raw_corpus(path).word_count
        per_note_small = sizes[200] / 200
        per_note_large = sizes[400] / 400
        assert abs(per_note_large - per_note_small) / per_note_small < 0.2

    def test_note_count_validation(self):
        with pytest.raises(ValueError):
            make_template_corpus(1, 0)
        with pytest.raises(ValueError):
            make_template_corpus(1, len(surname_pool()) + 1)

    def test_surnames_unique_per_corpus(self, tmp_path):
        path = tmp_path / "raw.txt"
        path.write_text(make_template_corpus(5, 300), encoding="utf-8")
        corpus = read_raw_corpus(path)
        pool = set(surname_pool())
        counts = collections.Counter(
            tok for note in corpus for tok in note.tokens if tok in pool)
        # a named note mentions its surname exactly three times
        assert counts and all(c == 3 for c in counts.values())


class TestBenchmarks:
    def test_gold_scores_are_graded(self):
        bench = make_similarity_benchmark()
        scores = {s for _, _, s in bench.pairs}
        assert scores == {4.0, 1.0}
        assert sum(1 for _, _, s in bench.pairs if s == 4.0) >= 20

    def test_bundle_files_deterministic(self, tmp_path):
        a = write_template_bundle(9, 40, tmp_path / "a")
        b = write_template_bundle(9, 40, tmp_path / "b")
        for name in ("raw_corpus", "benchmark_sim", "benchmark_rel", "nli_train", "nli_test"):
            assert getattr(a, name).read_bytes() == getattr(b, name).read_bytes()

    def test_bundle_is_readable(self, tmp_path):
        bundle = write_template_bundle(2, 30, tmp_path)
        assert len(read_raw_corpus(bundle.raw_corpus)) == 30
        assert len(read_benchmark(bundle.benchmark_sim)) > 30
        assert len(read_nli_jsonl(bundle.nli_train)) == 600


class TestNliExamples:
    def test_balanced_labels(self):
        examples = make_nli_examples(7, 90)
        counts = collections.Counter(e.label for e in examples)
        assert counts == {"entailment": 30, "contradiction": 30, "neutral": 30}

    def test_contradictions_carry_negation(self):
        for ex in make_nli_examples(7, 30):
            if ex.label == "contradiction":
                assert "denied" in ex.hypothesis

    def test_vocabulary_stays_in_grammar(self, tmp_path):
        path = tmp_path / "raw.txt"
        path.write_text(make_template_corpus(1, 400), encoding="utf-8")
        corpus_words = {t for n in read_raw_corpus(path) for t in n.tokens}
        for ex in make_nli_examples(8, 60):
            for tok in ex.premise + ex.hypothesis:
                assert tok in corpus_words
