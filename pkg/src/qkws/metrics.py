"""Keyword-level F1 and query-level exact parse rate."""

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    reference: tuple
    hypothesis: tuple

    def __init__(self, query_id: str, reference: Sequence, hypothesis: Sequence):
        object.__setattr__(self, "query_id", query_id)
        object.__setattr__(self, "reference", tuple(reference))
        object.__setattr__(self, "hypothesis", tuple(hypothesis))

    @property
    def exact(self) -> bool:
        return self.reference == self.hypothesis


def aligned_matches(ref: Sequence, hyp: Sequence) -> int:
    """Number of equal label pairs in a minimum-edit-distance alignment.

    Among all minimum-cost alignments (unit insert/delete/substitute
    costs) the one with the most matches is used, which makes the count
    well defined and symmetric.
    """
    rows, cols = len(ref) + 1, len(hyp) + 1
    # dp holds (cost, -matches); lexicographic min prefers more matches
    prev = [(j, 0) for j in range(cols)]
    for i in range(1, rows):
        cur = [(i, 0)] + [None] * (cols - 1)
        for j in range(1, cols):
            match = ref[i - 1] == hyp[j - 1]
            diag_cost, diag_neg = prev[j - 1]
            best = (diag_cost + (not match), diag_neg - match)
            up_cost, up_neg = prev[j]
            if (up_cost + 1, up_neg) < best:
                best = (up_cost + 1, up_neg)
            left_cost, left_neg = cur[j - 1]
            if (left_cost + 1, left_neg) < best:
                best = (left_cost + 1, left_neg)
            cur[j] = best
        prev = cur
    return -prev[-1][1]


def f1(results: Sequence[QueryResult]) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, f1) over all queries."""
    matches = 0
    hyp_total = 0
    ref_total = 0
    for r in results:
        matches += aligned_matches(r.reference, r.hypothesis)
        hyp_total += len(r.hypothesis)
        ref_total += len(r.reference)
    precision = matches / hyp_total if hyp_total else 0.0
    recall = matches / ref_total if ref_total else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)


def exact_rate(results: Sequence[QueryResult]) -> float:
    """Fraction of queries whose hypothesis equals the reference exactly."""
    if not results:
        return 0.0
    return sum(r.exact for r in results) / len(results)
