"""Evaluation: ROUGE-N recall, ROUGE-L, and LCS order-preservation scoring.

ROUGE-N here is recall against the reference (clipped n-gram matches over
reference n-gram count) and ROUGE-L is LCS recall, which follows the
headline-generation convention of reporting how much of the reference the
candidate recovered.  The order score is the LCS between a ground-truth
headline and its document, normalized by headline length, so a headline
that is a subsequence of the document scores exactly 1.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


def ngram_counts(tokens, n: int) -> Counter:
    toks = list(tokens)
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def rouge_n(candidate, reference, n: int) -> float:
    """Clipped n-gram recall: matched reference n-grams / reference n-grams.

    A reference shorter than n has no n-grams and scores 0 by convention.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ref = ngram_counts(reference, n)
    total = sum(ref.values())
    if total == 0:
        return 0.0
    cand = ngram_counts(candidate, n)
    matched = sum(min(count, ref[gram]) for gram, count in cand.items() if gram in ref)
    return matched / total


def lcs_length(a, b) -> int:
    """Longest common subsequence length, iterative O(|a|*|b|) dynamic program."""
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> float:
    """LCS recall: LCS(candidate, reference) / |reference|; empty reference scores 0."""
    ref = list(reference)
    if not ref:
        return 0.0
    return lcs_length(candidate, ref) / len(ref)


def lcs_order_score(headline, document) -> float:
    """How well the headline preserves the document's element order, in [0, 1].

    LCS(headline, document) / |headline|: exactly 1 when the headline is a
    subsequence of the document, 0 when they share nothing.
    """
    head = list(headline)
    if not head:
        raise ValueError("lcs_order_score requires a non-empty headline")
    return lcs_length(head, document) / len(head)


@dataclass
class RougeReport:
    rouge_1: float
    rouge_2: float
    rouge_3: float
    rouge_l: float

    @classmethod
    def score(cls, candidate, reference) -> "RougeReport":
        return cls(
            rouge_1=rouge_n(candidate, reference, 1),
            rouge_2=rouge_n(candidate, reference, 2),
            rouge_3=rouge_n(candidate, reference, 3),
            rouge_l=rouge_l(candidate, reference),
        )

    def as_dict(self) -> dict:
        return {
            "rouge_1": self.rouge_1,
            "rouge_2": self.rouge_2,
            "rouge_3": self.rouge_3,
            "rouge_l": self.rouge_l,
        }


def mean_rouge(pairs) -> RougeReport:
    """Macro-averaged ROUGE over (candidate, reference) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("mean_rouge needs at least one pair")
    reports = [RougeReport.score(c, r) for c, r in pairs]
    n = len(reports)
    return RougeReport(
        rouge_1=sum(r.rouge_1 for r in reports) / n,
        rouge_2=sum(r.rouge_2 for r in reports) / n,
        rouge_3=sum(r.rouge_3 for r in reports) / n,
        rouge_l=sum(r.rouge_l for r in reports) / n,
    )


@dataclass
class LcsSplit:
    high: list  # pairs with score strictly above the threshold
    low: list  # pairs with score <= threshold (boundary goes low)
    high_fraction: float
    low_fraction: float
    mean_high: float
    mean_low: float


def split_by_lcs(pairs, threshold: float) -> LcsSplit:
    """Divide (headline, document) pairs by their LCS order score.

    Scores strictly above the threshold go to the high group; a score
    equal to the threshold lands in the low group (pinned for
    determinism).  Group means are 0 for empty groups.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    high, low = [], []
    high_scores, low_scores = [], []
    for pair in pairs:
        headline, document = pair[0], pair[1]
        score = lcs_order_score(headline, document)
        if score > threshold:
            high.append(pair)
            high_scores.append(score)
        else:
            low.append(pair)
            low_scores.append(score)
    total = len(high) + len(low)
    return LcsSplit(
        high=high,
        low=low,
        high_fraction=len(high) / total if total else 0.0,
        low_fraction=len(low) / total if total else 0.0,
        mean_high=sum(high_scores) / len(high_scores) if high_scores else 0.0,
        mean_low=sum(low_scores) / len(low_scores) if low_scores else 0.0,
    )


def format_rouge_table(rows) -> str:
    """Aligned text table of (label, n_pairs, fraction, RougeReport) rows.

    Scores are scaled by 100 and printed with two decimals, in the column
    order ROUGE-1, ROUGE-2, ROUGE-3, ROUGE-L.
    """
    header = f"{'group':<10} {'pairs':>6} {'frac':>7} {'ROUGE-1':>8} {'ROUGE-2':>8} {'ROUGE-3':>8} {'ROUGE-L':>8}"
    lines = [header]
    for label, n_pairs, fraction, report in rows:
        lines.append(
            f"{label:<10} {n_pairs:>6d} {fraction:>7.3f} "
            f"{100 * report.rouge_1:>8.2f} {100 * report.rouge_2:>8.2f} "
            f"{100 * report.rouge_3:>8.2f} {100 * report.rouge_l:>8.2f}"
        )
    return "\n".join(lines)
