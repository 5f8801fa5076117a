import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devprints import ngram
from devprints.ngram import BOS, EOS, UNK, Smoothing
from devprints.synth import markov_corpus

from _oracles import BruteForceLM

MLE = Smoothing("mle", min_count=1)

sentences_st = st.lists(st.lists(st.sampled_from("ABC"), min_size=0, max_size=8).map(tuple), min_size=1, max_size=12)


def random_corpus(seed, vocab="ABCD", n_sent=30, max_len=10):
    r = random.Random(seed)
    return [tuple(r.choice(vocab) for _ in range(r.randint(0, max_len))) for _ in range(n_sent)]


class TestTrain:
    def test_unigram_mle_counts_end_marker(self):
        m = ngram.train([("A", "A", "A")], 1, MLE)
        assert m.prob("A") == pytest.approx(3 / 4)
        assert m.prob(EOS) == pytest.approx(1 / 4)

    def test_deterministic_bigram(self):
        m = ngram.train([("A", "B", "A", "B")], 2, MLE)
        assert m.prob("B", ["A"]) == 1.0

    def test_katz_normalizes_on_random_binary_corpus(self):
        r = random.Random(7)
        corpus = [tuple(r.choice("01") for _ in range(r.randint(1, 15))) for _ in range(100)]
        m = ngram.train(corpus, 3)
        for h in m.counts[3]:
            assert sum(m.distribution(list(h)).values()) == pytest.approx(1.0, abs=1e-9)

    def test_rejects_bad_order_and_empty_corpus(self):
        with pytest.raises(ValueError):
            ngram.train([("A",)], 0)
        with pytest.raises(ValueError):
            ngram.train([], 2)

    def test_rare_tokens_become_unk(self):
        m = ngram.train([("A", "A", "B")], 1, Smoothing("mle"))
        assert "B" not in m.vocabulary and UNK in m.vocabulary
        assert m.prob("B") == m.prob(UNK) == pytest.approx(1 / 4)

    def test_bad_smoothing_config(self):
        with pytest.raises(ValueError):
            Smoothing("kneser-ney")
        with pytest.raises(ValueError):
            Smoothing("additive", k=0)

    @settings(max_examples=60, deadline=None)
    @given(sentences_st, st.integers(1, 4), st.sampled_from(["katz", "additive"]))
    def test_every_context_normalizes(self, corpus, n, method):
        m = ngram.train(corpus, n, Smoothing(method, k=0.3))
        for ctx in m.contexts() + [(BOS,) * (n - 1), ("Z",) * (n - 1)]:
            dist = m.distribution(list(ctx))
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
            assert all(0 < p <= 1 for p in dist.values())

    def test_discounter_falls_back_to_absolute(self):
        from collections import Counter

        d, desc = ngram._discounter(Counter({1: 5}), 5)
        assert desc.startswith("absolute")
        assert d(1) == pytest.approx(0.5)
        d, desc = ngram._discounter(Counter({1: 10, 2: 4, 3: 2, 4: 1, 5: 1, 6: 1}), 5)
        assert desc.startswith("good-turing")


class TestScoring:
    def test_deterministic_bigram_log_prob(self):
        m = ngram.train([("A", "B", "A", "B")], 2, MLE)
        # ledger: P(A|<s>)=1, P(B|A)=1, P(A|B)=1/2, P(B|A)=1, P(</s>|B)=1/2
        assert ngram.sequence_log_prob(m, ("A", "B", "A", "B")) == pytest.approx(-2.0)

    def test_empty_sentence_scores_end_marker_only(self):
        m = ngram.train(random_corpus(1), 3)
        assert ngram.sequence_log_prob(m, ()) == pytest.approx(math.log2(m.prob(EOS, [BOS, BOS])))

    def test_product_of_stored_conditionals(self):
        corpus = random_corpus(2)
        m = ngram.train(corpus, 3)
        sent = ("A", "C", "B", "D", "A")
        padded = [BOS, BOS, *sent, EOS]
        direct = sum(math.log2(m.prob(padded[i], padded[:i])) for i in range(2, len(padded)))
        assert ngram.sequence_log_prob(m, sent) == pytest.approx(direct, abs=1e-9)

    def test_unsmoothed_zero_probability(self):
        m = ngram.train([("A", "B")], 2, MLE)
        assert ngram.sequence_log_prob(m, ("B", "A")) == -math.inf
        with pytest.raises(ngram.ZeroProbabilityError, match="smoothing"):
            ngram.cross_entropy(m, [("B", "A")])

    def test_self_scored_deterministic_sentence_has_zero_entropy(self):
        corpus = [("A", "B", "C", "D")] * 3
        m = ngram.train(corpus, 5, MLE)
        assert ngram.cross_entropy(m, corpus) == pytest.approx(0.0, abs=1e-9)

    def test_alternating_unigram_is_one_bit(self):
        corpus = [("A", "B") * 10]
        m = ngram.train(corpus, 1, MLE, boundaries=False)
        assert ngram.cross_entropy(m, corpus) == pytest.approx(1.0)

    def test_fifty_sentence_corpus_matches_bruteforce(self):
        corpus = random_corpus(3, n_sent=50)
        train, test = corpus[:40], corpus[40:]
        m = ngram.train(train, 3)
        assert ngram.cross_entropy(m, test) == pytest.approx(BruteForceLM(train, 3).cross_entropy(test), abs=1e-9)

    def test_perplexity_is_two_to_the_entropy(self):
        corpus = random_corpus(4)
        m = ngram.train(corpus, 2)
        assert ngram.perplexity(m, corpus) == 2 ** ngram.cross_entropy(m, corpus)

    @settings(max_examples=40, deadline=None)
    @given(sentences_st, st.randoms())
    def test_sentence_order_does_not_matter(self, corpus, rnd):
        m = ngram.train(corpus, 2)
        shuffled = list(corpus)
        rnd.shuffle(shuffled)
        assert ngram.cross_entropy(m, shuffled) == pytest.approx(ngram.cross_entropy(m, corpus), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(sentences_st, st.integers(1, 4))
    def test_mle_training_entropy_nonincreasing_in_order(self, corpus, n):
        h = [ngram.cross_entropy(ngram.train(corpus, k, MLE), corpus) for k in (n, n + 1)]
        assert h[1] <= h[0] + 1e-9


class TestKFold:
    def test_partition(self):
        corpus = random_corpus(5, n_sent=10)
        splits = ngram.kfold_splits(corpus, 5, seed=9)
        seen = []
        for s in splits:
            assert len(s.test) == 2 and len(s.train) == 8
            seen += s.test_index
        assert sorted(seen) == list(range(10))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 8), st.integers(0, 1000))
    def test_partition_property(self, n, folds, seed):
        folds = min(folds, n)
        splits = ngram.kfold_splits([("A",)] * n, folds, seed)
        idx = [i for s in splits for i in s.test_index]
        assert sorted(idx) == list(range(n))
        assert all(abs(len(s.test) - n / folds) <= 1 for s in splits)

    def test_bad_fold_counts(self):
        with pytest.raises(ValueError):
            ngram.kfold_splits([("A",)] * 3, 1)
        with pytest.raises(ValueError):
            ngram.kfold_splits([("A",)] * 3, 4)

    def test_seeded_determinism_and_report_fields(self):
        corpus = random_corpus(6, n_sent=40)
        a = ngram.kfold_cross_entropy(corpus, [1, 2], seed=3)
        b = ngram.kfold_cross_entropy(corpus, [1, 2], seed=3)
        assert a == b
        rep = a[2]
        assert rep.perplexity == pytest.approx(2 ** rep.mean, abs=1e-9)
        assert rep.std == pytest.approx(np.std(rep.entropies, ddof=1))
        assert rep.n_tokens == sum(len(s) + 1 for s in corpus)
        assert all(f.entropy >= 0 for f in rep.folds)

    def test_markov_shape(self):
        corpus = markov_corpus(200, 60, seed=1)
        reports = ngram.kfold_cross_entropy(corpus, [1, 2, 3, 4, 5], seed=0)
        h = [reports[n].mean for n in range(1, 6)]
        assert h[1] < h[0]
        drop = h[0] - h[1]
        tail = [abs(h[i] - h[i + 1]) for i in range(2, 4)]
        assert all(g < 0.05 and g < drop / 10 for g in tail)


def test_tokenize_text():
    assert ngram.tokenize_text("Hello, World! It's me.\n\nNew para") == [
        ("hello", "world"), ("it", "s", "me"), ("new", "para"),
    ]
