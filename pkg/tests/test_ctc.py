import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkws.ctc import (
    Posteriorgram,
    Segment,
    best_path_score,
    blank_mass,
    collapse,
    ctc_forward,
    ctc_viterbi,
)


def random_post(rng, frames, classes):
    return Posteriorgram(rng.dirichlet(np.ones(classes), size=frames))


def enumerate_alignments(post, segment, phones, reduce_fn):
    """Brute-force oracle: iterate every label sequence on the segment."""
    lp = post.log_probs
    frames = range(segment.start, segment.end + 1)
    labels = range(post.num_classes)
    total = -math.inf
    target = list(phones)
    for path in itertools.product(labels, repeat=segment.frames):
        if collapse(path) != target:
            continue
        lpath = sum(lp[t, l] for t, l in zip(frames, path))
        total = reduce_fn(total, lpath)
    return total


def logaddexp(a, b):
    return float(np.logaddexp(a, b))


class TestCollapse:
    def test_worked_example(self):
        # a a _ b b b _ _ c -> a b c
        assert collapse([1, 1, 0, 2, 2, 2, 0, 0, 3]) == [1, 2, 3]

    def test_all_blanks(self):
        assert collapse([0, 0, 0]) == []

    def test_blank_separates_repeats(self):
        assert collapse([1, 0, 1]) == [1, 1]

    @given(st.lists(st.integers(0, 3), max_size=30))
    def test_output_form_and_shrinking(self, labels):
        once = collapse(labels)
        assert 0 not in once
        assert len(once) <= len(labels)
        # identity on repeat-free outputs; repeats only survive when a
        # blank separated them, and a second pass merges those
        if all(a != b for a, b in zip(once, once[1:])):
            assert collapse(once) == once
        else:
            assert collapse(once) == collapse(collapse(once))


class TestPosteriorgram:
    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            Posteriorgram(np.array([[0.5, 0.4]]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Posteriorgram(np.array([[1.5, -0.5]]))

    def test_stores_float32(self):
        p = random_post(np.random.default_rng(0), 4, 3)
        assert p.probs.dtype == np.float32

    def test_prefix_sums_match_direct(self):
        rng = np.random.default_rng(1)
        p = random_post(rng, 50, 4)
        for _ in range(30):
            s = int(rng.integers(0, 50))
            e = int(rng.integers(s, 50))
            seg = Segment(s, e)
            direct = float(np.sum(p.probs[s : e + 1, 0].astype(np.float64)))
            assert blank_mass(p, seg) == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestSegment:
    def test_invalid(self):
        with pytest.raises(ValueError):
            Segment(3, 2)
        with pytest.raises(ValueError):
            Segment(-1, 2)

    def test_frames(self):
        assert Segment(2, 2).frames == 1
        assert Segment(0, 9).frames == 10


class TestForward:
    def test_single_frame_single_phone(self):
        p = random_post(np.random.default_rng(2), 3, 4)
        got = ctc_forward(p, Segment(1, 1), [2])
        assert got == pytest.approx(float(p.log_probs[1, 2]))

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(3)
        p = random_post(rng, 4, 3)
        seq = [1, 2]
        want = enumerate_alignments(p, Segment(0, 3), seq, logaddexp)
        got = ctc_forward(p, Segment(0, 3), seq)
        assert math.exp(got) == pytest.approx(math.exp(want), rel=1e-9)

    def test_infeasible_returns_log_zero(self):
        p = random_post(np.random.default_rng(4), 3, 3)
        assert ctc_forward(p, Segment(0, 1), [1, 2, 1]) == -math.inf

    def test_repeated_phone_needs_blank(self):
        p = random_post(np.random.default_rng(5), 2, 3)
        # two frames cannot spell [a, a]: a blank must separate them
        assert ctc_forward(p, Segment(0, 1), [1, 1]) == -math.inf

    def test_empty_sequence_is_blank_path(self):
        p = random_post(np.random.default_rng(6), 4, 3)
        want = float(np.sum(p.log_probs[1:4, 0]))
        assert ctc_forward(p, Segment(1, 3), []) == pytest.approx(want)

    def test_segment_bounds_checked(self):
        p = random_post(np.random.default_rng(7), 3, 3)
        with pytest.raises(ValueError):
            ctc_forward(p, Segment(0, 3), [1])

    def test_phone_bounds_checked(self):
        p = random_post(np.random.default_rng(8), 3, 3)
        with pytest.raises(ValueError):
            ctc_forward(p, Segment(0, 2), [0])
        with pytest.raises(ValueError):
            ctc_forward(p, Segment(0, 2), [3])


class TestViterbi:
    def test_one_hot_path(self):
        rows = np.zeros((3, 3), dtype=np.float32)
        rows[0, 1] = 1.0  # a
        rows[1, 0] = 1.0  # blank
        rows[2, 2] = 1.0  # b
        p = Posteriorgram(rows)
        logp, path = ctc_viterbi(p, Segment(0, 2), [1, 2])
        assert math.exp(logp) == pytest.approx(1.0)
        assert path == [1, 0, 2]

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(9)
        p = random_post(rng, 4, 3)
        for seq in ([1], [2, 1], [1, 1]):
            want = enumerate_alignments(p, Segment(0, 3), seq, max)
            got, path = ctc_viterbi(p, Segment(0, 3), seq)
            assert got == pytest.approx(want, abs=1e-12)
            if got > -math.inf:
                assert collapse(path) == list(seq)

    def test_viterbi_at_most_forward(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            p = random_post(rng, 5, 4)
            seq = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 4)))]
            v, _ = ctc_viterbi(p, Segment(0, 4), seq)
            f = ctc_forward(p, Segment(0, 4), seq)
            assert v <= f + 1e-12

    def test_infeasible(self):
        p = random_post(np.random.default_rng(11), 2, 3)
        logp, path = ctc_viterbi(p, Segment(0, 1), [1, 2, 1])
        assert logp == -math.inf and path == []

    def test_appended_sure_blank_keeps_score(self):
        rng = np.random.default_rng(12)
        base = rng.dirichlet(np.ones(3), size=4)
        sure_blank = np.array([[1.0, 0.0, 0.0]])
        longer = Posteriorgram(np.vstack([base, sure_blank]).astype(np.float32))
        shorter = Posteriorgram(base)
        for seq in ([1], [1, 2]):
            a, _ = ctc_viterbi(shorter, Segment(0, 3), seq)
            b, _ = ctc_viterbi(longer, Segment(0, 4), seq)
            assert b == pytest.approx(a, abs=1e-12)


class TestOracleSweep:
    def test_forward_and_viterbi_match_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(60):
            frames = int(rng.integers(1, 6))
            classes = int(rng.integers(2, 4))
            p = random_post(rng, frames, classes)
            seq_len = int(rng.integers(0, 4))
            seq = [int(rng.integers(1, classes)) for _ in range(seq_len)]
            s = int(rng.integers(0, frames))
            e = int(rng.integers(s, frames))
            seg = Segment(s, e)
            want_f = enumerate_alignments(p, seg, seq, logaddexp)
            want_v = enumerate_alignments(p, seg, seq, max)
            got_f = ctc_forward(p, seg, seq)
            got_v, _ = ctc_viterbi(p, seg, seq)
            assert math.exp(got_f) == pytest.approx(math.exp(want_f), rel=1e-9, abs=1e-300)
            assert math.exp(got_v) == pytest.approx(math.exp(want_v), rel=1e-9, abs=1e-300)


class TestBestPathAndBlankMass:
    def test_uniform_rows(self):
        p = Posteriorgram(np.full((5, 4), 0.25, dtype=np.float32))
        assert math.exp(best_path_score(p, Segment(0, 4))) == pytest.approx(0.25**5)

    def test_one_hot_rows(self):
        rows = np.eye(3, dtype=np.float32)[[1, 2, 0]]
        p = Posteriorgram(rows)
        assert best_path_score(p, Segment(0, 2)) == pytest.approx(0.0)

    def test_two_frame_product(self):
        p = Posteriorgram(np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]], np.float32))
        got = math.exp(best_path_score(p, Segment(0, 1)))
        assert got == pytest.approx(0.42, rel=1e-6)

    def test_blank_mass_extremes(self):
        sure = np.zeros((5, 3), dtype=np.float32)
        sure[:, 0] = 1.0
        assert blank_mass(Posteriorgram(sure), Segment(0, 4)) == 5.0
        none = np.zeros((4, 3), dtype=np.float32)
        none[:, 1] = 1.0
        assert blank_mass(Posteriorgram(none), Segment(0, 3)) == 0.0

    def test_no_underflow_long_segment(self):
        rng = np.random.default_rng(14)
        p = random_post(rng, 10_000, 3)
        score = best_path_score(p, Segment(0, 9_999))
        assert math.isfinite(score)
        v = ctc_forward(p, Segment(0, 9_999), [1, 2])
        assert math.isfinite(v)
