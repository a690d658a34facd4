import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctcsum import metrics
from ctcsum.selfcheck import lcs_length_memoized

tokens = st.lists(st.integers(min_value=0, max_value=6), max_size=15)


# hand-computed fixtures: (candidate, reference, rouge-1, -2, -3, -L)
FIXTURES = [
    (["a", "b", "c"], ["a", "b", "d"], 2 / 3, 1 / 2, 0.0, 2 / 3),
    (["x", "y", "z"], ["x", "y", "z"], 1.0, 1.0, 1.0, 1.0),
    (["a", "b"], ["c", "d"], 0.0, 0.0, 0.0, 0.0),
    (["a", "a", "b"], ["a", "a", "a"], 2 / 3, 1 / 2, 0.0, 2 / 3),
    (["b", "a", "c", "d"], ["a", "b", "c"], 1.0, 0.0, 0.0, 2 / 3),
]


class TestRougeFixtures:
    @pytest.mark.parametrize("cand,ref,r1,r2,r3,rl", FIXTURES)
    def test_hand_computed(self, cand, ref, r1, r2, r3, rl):
        assert metrics.rouge_n(cand, ref, 1) == pytest.approx(r1, abs=1e-6)
        assert metrics.rouge_n(cand, ref, 2) == pytest.approx(r2, abs=1e-6)
        assert metrics.rouge_n(cand, ref, 3) == pytest.approx(r3, abs=1e-6)
        assert metrics.rouge_l(cand, ref) == pytest.approx(rl, abs=1e-6)

    def test_reference_shorter_than_n(self):
        assert metrics.rouge_n(["a", "b", "c"], ["a", "b"], 3) == 0.0

    def test_empty_candidate(self):
        assert metrics.rouge_l([], ["a", "b"]) == 0.0
        assert metrics.rouge_n([], ["a"], 1) == 0.0

    def test_empty_reference(self):
        assert metrics.rouge_l(["a"], []) == 0.0

    def test_n_validation(self):
        with pytest.raises(ValueError):
            metrics.rouge_n(["a"], ["a"], 0)


class TestLcs:
    def test_subsequence_scores_one(self):
        assert metrics.lcs_order_score(["a", "c", "e"], ["a", "b", "c", "d", "e"]) == 1.0

    def test_disjoint_scores_zero(self):
        assert metrics.lcs_order_score(["x"], ["a", "b"]) == 0.0

    def test_empty_headline_rejected(self):
        with pytest.raises(ValueError):
            metrics.lcs_order_score([], ["a"])

    def test_matches_memoized_oracle(self):
        import numpy as np

        rng = np.random.default_rng(77)
        for _ in range(200):
            a = rng.integers(0, 5, size=12).tolist()
            b = rng.integers(0, 5, size=12).tolist()
            assert metrics.lcs_length(a, b) == lcs_length_memoized(a, b)

    @given(tokens, tokens)
    def test_symmetric(self, a, b):
        assert metrics.lcs_length(a, b) == metrics.lcs_length(b, a)

    @given(tokens.filter(bool), tokens, tokens)
    def test_monotone_under_document_extension(self, head, doc, extra):
        assert metrics.lcs_order_score(head, doc + extra) >= metrics.lcs_order_score(head, doc)

    @given(tokens, tokens.filter(bool))
    def test_rouge_l_times_ref_len_is_lcs(self, cand, ref):
        assert metrics.rouge_l(cand, ref) * len(ref) == pytest.approx(metrics.lcs_length(cand, ref))


class TestProperties:
    @given(tokens, tokens, st.integers(min_value=1, max_value=4))
    def test_scores_in_unit_interval(self, cand, ref, n):
        assert 0.0 <= metrics.rouge_n(cand, ref, n) <= 1.0
        assert 0.0 <= metrics.rouge_l(cand, ref) <= 1.0

    @given(tokens.filter(lambda t: len(t) >= 1), st.integers(min_value=1, max_value=3))
    def test_self_rouge_is_one(self, x, n):
        if len(x) >= n:
            assert metrics.rouge_n(x, x, n) == 1.0

    @given(tokens, tokens)
    def test_permutation_invariance_of_token_ids(self, cand, ref):
        # relabeling tokens by any bijection leaves every metric unchanged
        perm = {i: 6 - i for i in range(7)}
        mapped_c = [perm[t] for t in cand]
        mapped_r = [perm[t] for t in ref]
        for n in (1, 2, 3):
            assert metrics.rouge_n(cand, ref, n) == pytest.approx(metrics.rouge_n(mapped_c, mapped_r, n))
        assert metrics.rouge_l(cand, ref) == pytest.approx(metrics.rouge_l(mapped_c, mapped_r))


class TestSplit:
    def _pairs_with_scores(self):
        # headlines of length 10 with exactly k tokens from the document
        doc = list(range(1, 11))
        pairs = []
        for k in (2, 3, 5, 9, 10):
            head = doc[:k] + [99 + i for i in range(10 - k)]
            pairs.append((head, doc))
        return pairs

    def test_fixture_scores(self):
        want = [0.2, 0.3, 0.5, 0.9, 1.0]
        for (head, doc), score in zip(self._pairs_with_scores(), want):
            assert metrics.lcs_order_score(head, doc) == pytest.approx(score)

    def test_threshold_split_fractions(self):
        split = metrics.split_by_lcs(self._pairs_with_scores(), 0.4)
        assert split.high_fraction == pytest.approx(0.6)
        assert split.low_fraction == pytest.approx(0.4)
        assert split.mean_high == pytest.approx((0.5 + 0.9 + 1.0) / 3)
        assert split.mean_low == pytest.approx(0.25)

    def test_threshold_zero_all_high(self):
        split = metrics.split_by_lcs(self._pairs_with_scores(), 0.0)
        assert len(split.high) == 5
        assert split.low == []

    def test_threshold_one_all_low(self):
        split = metrics.split_by_lcs(self._pairs_with_scores(), 1.0)
        assert split.high == []
        assert len(split.low) == 5

    def test_boundary_goes_low(self):
        pairs = [(list(range(1, 11))[:4] + [99] * 6, list(range(1, 11)))]  # score 0.4 exactly
        split = metrics.split_by_lcs(pairs, 0.4)
        assert len(split.low) == 1

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            metrics.split_by_lcs([], 1.5)


class TestReport:
    def test_mean_rouge(self):
        rep = metrics.mean_rouge([(["a"], ["a"]), (["b"], ["a"])])
        assert rep.rouge_1 == pytest.approx(0.5)

    def test_table_format(self):
        rep = metrics.RougeReport(rouge_1=0.4271, rouge_2=0.2462, rouge_3=0.1424, rouge_l=0.4056)
        table = metrics.format_rouge_table([("overall", 100, 1.0, rep)])
        assert "ROUGE-1" in table.splitlines()[0]
        assert "42.71" in table and "24.62" in table and "14.24" in table and "40.56" in table
