import itertools
import random

import pytest

from qkws.decoder import DetectionCandidate
from qkws.postproc import check_sequence, greedy, sequence


def cand(keyword, start, end, confidence):
    return DetectionCandidate(keyword, start, end, confidence)


def brute_force_best(candidates):
    """Max total confidence over all non-overlapping subsets."""
    best = 0.0
    items = sorted(candidates, key=lambda c: c.start)
    n = len(items)

    def walk(i, last_end, total):
        nonlocal best
        best = max(best, total)
        for j in range(i, n):
            c = items[j]
            if c.start > last_end:
                walk(j + 1, c.end, total + c.confidence)

    walk(0, -1, 0.0)
    return best


def random_candidates(rng, count, horizon=40):
    out = []
    for _ in range(count):
        start = rng.randrange(horizon)
        end = start + rng.randrange(6)
        # dyadic confidences make subset sums order-independent and exact
        conf = rng.randrange(1, 2**20) / 2**20
        out.append(cand(rng.randrange(3), start, end, conf))
    return out


class TestGreedy:
    def test_earlier_end_wins_despite_lower_confidence(self):
        got = greedy([cand(0, 1, 5, 0.9), cand(1, 3, 8, 0.95)])
        assert [(c.keyword, c.start, c.end) for c in got] == [(0, 1, 5)]

    def test_empty(self):
        assert greedy([]) == []

    def test_highest_confidence_at_same_end(self):
        got = greedy([cand(0, 2, 6, 0.7), cand(1, 1, 6, 0.9)])
        assert [(c.keyword, c.confidence) for c in got] == [(1, 0.9)]

    def test_adjacent_segments_both_kept(self):
        got = greedy([cand(0, 0, 3, 0.5), cand(1, 4, 6, 0.5)])
        assert len(got) == 2
        check_sequence(got)

    def test_tie_prefers_longer_then_lower_id(self):
        got = greedy([cand(1, 3, 6, 0.8), cand(0, 2, 6, 0.8)])
        assert got[0].keyword == 0
        got = greedy([cand(1, 2, 6, 0.8), cand(0, 2, 6, 0.8)])
        assert got[0].keyword == 0

    def test_permutation_invariant(self):
        rng = random.Random(0)
        cands = random_candidates(rng, 8)
        want = greedy(cands)
        for _ in range(10):
            rng.shuffle(cands)
            assert greedy(cands) == want


class TestSequence:
    def test_prefers_higher_total(self):
        got = sequence([cand(0, 1, 5, 0.9), cand(1, 3, 8, 0.95)])
        assert [(c.keyword, c.confidence) for c in got] == [(1, 0.95)]

    def test_two_small_beat_one_big(self):
        got = sequence(
            [cand(0, 1, 3, 0.6), cand(1, 5, 8, 0.6), cand(2, 2, 7, 0.9)]
        )
        assert [c.keyword for c in got] == [0, 1]

    def test_empty(self):
        assert sequence([]) == []

    def test_matches_brute_force(self):
        rng = random.Random(1)
        for trial in range(120):
            cands = random_candidates(rng, rng.randrange(13))
            got = sequence(cands)
            check_sequence(got)
            total = sum(c.confidence for c in got)
            assert total == brute_force_best(cands)

    def test_beats_or_ties_greedy(self):
        rng = random.Random(2)
        for _ in range(100):
            cands = random_candidates(rng, rng.randrange(16))
            s = sum(c.confidence for c in sequence(cands))
            g = sum(c.confidence for c in greedy(cands))
            assert s >= g - 1e-12

    def test_permutation_invariant(self):
        rng = random.Random(3)
        cands = random_candidates(rng, 10)
        want = sequence(cands)
        for _ in range(10):
            rng.shuffle(cands)
            assert sequence(cands) == want

    def test_tie_prefers_fewer_detections(self):
        # two singles tie with one spanning candidate; the span wins only
        # if strictly better
        a = cand(0, 0, 1, 0.5)
        b = cand(1, 3, 4, 0.5)
        spanning = cand(2, 0, 4, 1.0)
        got = sequence([a, b, spanning])
        assert [c.keyword for c in got] == [2]


class TestInvariants:
    def test_outputs_never_overlap(self):
        rng = random.Random(4)
        for _ in range(200):
            cands = random_candidates(rng, rng.randrange(20))
            check_sequence(greedy(cands))
            check_sequence(sequence(cands))

    def test_check_sequence_rejects_overlap(self):
        with pytest.raises(ValueError):
            check_sequence([cand(0, 0, 5, 0.5), cand(1, 5, 8, 0.5)])
