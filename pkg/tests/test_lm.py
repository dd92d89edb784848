import math

import numpy as np
import pytest

from oracles import bigram_kn_reference
from phonodec.errors import DataError, ParameterError
from phonodec.lm import (BOS_ID, EOS_ID, KneserNeyLM, count_ngrams,
                         empty_model, lm_logprob, perplexity, read_arpa,
                         rescore_interpolate, sequence_logprob,
                         train_kneser_ney, write_arpa)

TOY = [[1, 2], [1, 2], [1, 2], [1, 3]]  # {A B x3, A C x1}


def toy_model(mode="fixed"):
    stats = count_ngrams(TOY, order=2, vocab_size=4, sentence_bounds=False)
    return train_kneser_ney(stats, discount_mode=mode, discount=0.75)


def alphabet_sum(model, context):
    # summation oracle: expand the distribution token by token
    return sum(math.exp(lm_logprob(model, w, context)) for w in model.alphabet)


def random_corpus(rng, n_seqs, vocab_size, max_len=12):
    return [[int(rng.integers(1, vocab_size))
             for _ in range(int(rng.integers(1, max_len)))]
            for _ in range(n_seqs)]


class TestCountNgrams:
    def test_bigram_counts(self):
        stats = count_ngrams([[1, 2], [1, 2]], order=2, sentence_bounds=False)
        assert stats.raw[1][(1, 2)] == 2

    def test_token_total_includes_end_symbols(self):
        stats = count_ngrams([[1, 2, 3], [4]], order=2, sentence_bounds=True)
        assert stats.total_tokens == 4 + 2
        no_bounds = count_ngrams([[1, 2, 3], [4]], order=2,
                                 sentence_bounds=False)
        assert no_bounds.total_tokens == 4

    def test_continuation_counts_match_recount_oracle(self, rng):
        corpus = random_corpus(rng, 30, 6)
        stats = count_ngrams(corpus, order=3, vocab_size=6,
                             sentence_bounds=True)
        # brute-force recount: distinct single-token predecessors of w
        for w in range(1, 6):
            predecessors = set()
            for seq in corpus:
                padded = [BOS_ID] + list(seq) + [EOS_ID]
                for u, v in zip(padded, padded[1:]):
                    if v == w:
                        predecessors.add(u)
            expected = len(predecessors)
            assert stats.adjusted[0].get((w,), 0) == expected

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            count_ngrams([], order=2)

    def test_bos_grams_keep_raw_counts(self):
        stats = count_ngrams([[5, 1], [5, 2], [5, 3]], order=2,
                             vocab_size=6, sentence_bounds=True)
        # (BOS, 5) occurs three times; continuation would collapse it to 1
        assert stats.adjusted[1][(BOS_ID, 5)] == 3


class TestTrainKneserNey:
    def test_toy_corpus_hand_values(self):
        model = toy_model()
        assert math.exp(lm_logprob(model, 2, [1])) == pytest.approx(0.75, abs=1e-12)
        assert math.exp(lm_logprob(model, 3, [1])) == pytest.approx(0.25, abs=1e-12)

    def test_toy_logprob_value(self):
        assert lm_logprob(toy_model(), 2, [1]) == pytest.approx(math.log(0.75),
                                                                abs=1e-12)

    def test_matches_independent_bigram_reference(self, rng):
        for _ in range(5):
            corpus = random_corpus(rng, 25, 5, max_len=8)
            reference = bigram_kn_reference(corpus, discount=0.75)
            stats = count_ngrams(corpus, order=2, vocab_size=5,
                                 sentence_bounds=False)
            model = train_kneser_ney(stats, discount_mode="fixed", discount=0.75)
            for (u, w), want in reference.items():
                got = math.exp(lm_logprob(model, w, [u]))
                assert got == pytest.approx(want, abs=1e-12)

    def test_single_observation_modified_mode_has_full_support(self):
        stats = count_ngrams([[3]], order=2, vocab_size=5, sentence_bounds=True)
        model = train_kneser_ney(stats, discount_mode="modified")
        for w in model.alphabet:
            p = math.exp(lm_logprob(model, w, []))
            assert 0.0 < p < 1.0
        assert alphabet_sum(model, []) == pytest.approx(1.0, abs=1e-9)

    def test_stored_context_distributions_sum_to_one(self, rng):
        corpus = random_corpus(rng, 120, 8)
        stats = count_ngrams(corpus, order=4, vocab_size=8, sentence_bounds=True)
        for mode in ("fixed", "modified"):
            model = train_kneser_ney(stats, discount_mode=mode)
            contexts = {gram[:-1] for table in model.logprob for gram in table}
            for ctx in contexts:
                assert alphabet_sum(model, ctx) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_support_under_fixed_discounts(self):
        base = [[1, 2], [1, 3], [2, 1]]
        stats_a = count_ngrams(base, order=2, vocab_size=4, sentence_bounds=False)
        model_a = train_kneser_ney(stats_a, discount_mode="fixed")
        stats_b = count_ngrams(base + [[1, 2]], order=2, vocab_size=4,
                               sentence_bounds=False)
        model_b = train_kneser_ney(stats_b, discount_mode="fixed")
        assert lm_logprob(model_b, 2, [1]) >= lm_logprob(model_a, 2, [1])

    def test_bad_mode_rejected(self):
        stats = count_ngrams(TOY, order=2, sentence_bounds=False)
        with pytest.raises(ParameterError):
            train_kneser_ney(stats, discount_mode="laplace")


class TestLmLogprob:
    def test_unseen_context_backs_off_with_weight(self):
        model = toy_model()
        # context C was never seen as a context: bow(C) = 1, so the value
        # equals the unigram continuation probability
        assert lm_logprob(model, 2, [3]) == pytest.approx(math.log(0.5), abs=1e-12)
        # two-level trace: context (B, A) matches only via suffix (A,)
        assert lm_logprob(model, 2, [2, 1]) == pytest.approx(
            lm_logprob(model, 2, [1]), abs=1e-15)

    def test_context_length_robust(self, rng):
        corpus = random_corpus(rng, 60, 6)
        stats = count_ngrams(corpus, order=3, vocab_size=6, sentence_bounds=True)
        model = train_kneser_ney(stats, discount_mode="modified")
        for _ in range(100):
            token = int(rng.integers(1, 6))
            ctx = [int(rng.integers(1, 6)) for _ in range(2)]
            longer = [int(rng.integers(1, 6))] * 3 + ctx
            assert lm_logprob(model, token, longer) == pytest.approx(
                lm_logprob(model, token, ctx), abs=1e-15)

    def test_empty_model_uniform_42(self):
        model = empty_model(42)
        value = lm_logprob(model, 17, [3, 4])
        assert value == pytest.approx(math.log(1.0 / 42.0), abs=1e-12)
        assert math.exp(value) == pytest.approx(0.0238, abs=1e-4)


class TestPerplexity:
    def test_uniform_model_perplexity_is_vocab_size(self):
        model = empty_model(10)
        assert perplexity(model, [[1, 2, 3], [4, 5]]) == pytest.approx(10.0,
                                                                       abs=1e-9)

    def test_repeated_sequence_approaches_one(self):
        corpus = [[1, 2, 3, 4]] * 100
        stats = count_ngrams(corpus, order=3, vocab_size=5, sentence_bounds=True)
        model = train_kneser_ney(stats, discount_mode="fixed")
        assert perplexity(model, corpus) < 1.5

    def test_matches_summation_oracle(self, rng):
        corpus = random_corpus(rng, 40, 6)
        stats = count_ngrams(corpus, order=3, vocab_size=6, sentence_bounds=True)
        model = train_kneser_ney(stats, discount_mode="modified")
        total = 0.0
        count = 0
        for seq in corpus:
            ctx = (BOS_ID,)
            for w in list(seq) + [EOS_ID]:
                total += lm_logprob(model, w, ctx)
                ctx = (ctx + (w,))[-(model.order - 1):]
                count += 1
        expected = math.exp(-total / count)
        assert perplexity(model, corpus) == pytest.approx(expected, abs=1e-9)

    def test_sequence_logprob_consistency(self, rng):
        corpus = random_corpus(rng, 30, 5)
        stats = count_ngrams(corpus, order=3, vocab_size=5, sentence_bounds=True)
        model = train_kneser_ney(stats, discount_mode="modified")
        total = sum(sequence_logprob(model, seq) for seq in corpus)
        tokens = sum(len(s) + 1 for s in corpus)
        assert perplexity(model, corpus) == pytest.approx(
            math.exp(-total / tokens), abs=1e-12)


class TestArpaRoundTrip:
    def build(self, rng, mode="modified"):
        corpus = random_corpus(rng, 150, 8)
        stats = count_ngrams(corpus, order=4, vocab_size=8, sentence_bounds=True)
        return train_kneser_ney(stats, discount_mode=mode)

    def test_roundtrip_queries_within_1e6(self, tmp_path, rng):
        model = self.build(rng)
        path = tmp_path / "model.arpa"
        write_arpa(model, path)
        back = read_arpa(path, vocab_size=8)
        assert back.order == model.order
        for _ in range(2000):
            token = int(rng.integers(0, 8))
            ctx = [int(rng.integers(1, 8))
                   for _ in range(int(rng.integers(0, 4)))]
            a = lm_logprob(model, token, ctx)
            b = lm_logprob(back, token, ctx)
            if math.isinf(a) or math.isinf(b):
                assert a == b
            else:
                assert b == pytest.approx(a, abs=1e-6)

    def test_data_counts_equal_table_sizes(self, tmp_path, rng):
        model = self.build(rng)
        path = tmp_path / "model.arpa"
        write_arpa(model, path)
        declared = {}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("ngram "):
                    k, n = line[len("ngram "):].split("=")
                    declared[int(k)] = int(n)
                elif line.startswith("\\1-grams"):
                    break
        back = read_arpa(path, vocab_size=8)
        for k, n in declared.items():
            assert len(back.logprob[k - 1]) == n

    def test_symbolic_tokens(self, tmp_path, rng):
        model = self.build(rng)
        names = {i: f"P{i}" for i in range(8)}
        path = tmp_path / "model.arpa"
        write_arpa(model, path, symbols=names)
        text = path.read_text()
        assert "P3" in text and "<s>" in text
        back = read_arpa(path, symbols={v: k for k, v in names.items()},
                         vocab_size=8)
        assert lm_logprob(back, 3, [2]) == pytest.approx(
            lm_logprob(model, 3, [2]), abs=1e-6)

    def test_malformed_header_names_line(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n\\one-grams:\n-0.5\t1\n\\end\\\n")
        with pytest.raises(DataError, match=":4"):
            read_arpa(path)

    def test_missing_data_header(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\1-grams:\n-0.5\t1\n\\end\\\n")
        with pytest.raises(DataError):
            read_arpa(path)


class TestRescoreInterpolate:
    def test_paper_weighting(self):
        assert rescore_interpolate(-1.0, -2.0, beta=0.8) == pytest.approx(-1.8)

    def test_beta_extremes(self):
        assert rescore_interpolate(-1.5, -9.0, beta=0.0) == -1.5
        assert rescore_interpolate(-1.5, -9.0, beta=1.0) == -9.0


class TestKneserNeyLMEstimator:
    def test_fit_and_query(self, rng):
        corpus = random_corpus(rng, 50, 6)
        est = KneserNeyLM(order=3, vocab_size=6).fit(corpus)
        assert est.logprob(2, [1]) <= 0.0
        assert est.perplexity(corpus) > 1.0
        assert est.score(corpus) == pytest.approx(
            -math.log(est.perplexity(corpus)))

    def test_get_params(self):
        est = KneserNeyLM(order=4, discount_mode="fixed")
        params = est.get_params()
        assert params["order"] == 4
        assert params["discount_mode"] == "fixed"
