import itertools
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aedhwr.metrics import EvalReport, SampleScore, char_tokens, levenshtein, ned, score_pairs, word_tokens
from aedhwr.tensor import UsageError


def recursive_ed(a: tuple, b: tuple) -> int:
    """Exhaustive recursion over the last symbols, no tabulation shared with the DP."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(go(i - 1, j) + 1, go(i, j - 1) + 1, go(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return go(len(a), len(b))


def all_sequences(alphabet="xyz", max_len=6):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def test_examples():
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("thành", "thành") == 0


def test_dp_equals_recursion_short():
    # the full length-6 cross product runs in the acceptance suite
    seqs = list(all_sequences(max_len=3))
    for a in seqs:
        for b in seqs:
            assert levenshtein(a, b) == recursive_ed(a, b)


tokens = st.lists(st.sampled_from("abcd"), max_size=8)


@settings(max_examples=300, deadline=None)
@given(tokens, tokens, tokens)
def test_metric_axioms(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert abs(len(a) - len(b)) <= levenshtein(a, b) <= max(len(a), len(b))


def test_ned_spot_values():
    assert ned(char_tokens("thành"), char_tokens("thanh")) == 20.0
    ref, hyp = word_tokens("tôi từng nghĩ"), word_tokens("tôi từng nghỉ")
    assert levenshtein(ref, hyp) == 1
    assert ned(ref, hyp) == pytest.approx(33.33, abs=0.01)
    assert ned("abc", "abc") == 0.0


def test_ned_empty_reference():
    with pytest.raises(UsageError):
        ned([], ["a"])


def test_composed_and_decomposed_compare_equal():
    decomposed = "thành"
    s = SampleScore.score("x", "thành", decomposed)
    assert s.char_ed == 0 and s.ned_char == 0.0


def test_report_aggregates_are_means():
    rep = score_pairs([("a", "thành", "thanh"), ("b", "ab", "ab")])
    assert rep.cer == pytest.approx(10.0)
    assert rep.summary() == "CER=10.00 WER=50.00"
    assert rep.to_tsv().count("\n") == 2
    assert rep.to_tsv().splitlines()[0].split("\t") == ["a", "thành", "thanh", "1", "1", "20.0000", "100.0000"]


def test_empty_report_rejected():
    with pytest.raises(UsageError):
        score_pairs([])
    assert isinstance(EvalReport([]), EvalReport)
