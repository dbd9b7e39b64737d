import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkws.confidence import ConfidenceKind, SegmentStats, score

RAW = ConfidenceKind("raw")
NF = ConfidenceKind("frames")
NB = ConfidenceKind("noblank")

ALL_KINDS = [ConfidenceKind(n, r) for n in ("raw", "frames", "noblank") for r in (False, True)]


def stats_for(per_frame_prob, n_frames, blank_mass=0.0, best_per_frame=None):
    log_raw = n_frames * math.log(per_frame_prob)
    best = best_per_frame if best_per_frame is not None else per_frame_prob
    return SegmentStats(log_raw, n_frames * math.log(best), n_frames, blank_mass)


class TestKinds:
    def test_six_valid_combinations(self):
        assert len(set(ALL_KINDS)) == 6

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            ConfidenceKind("length")

    def test_cli_names(self):
        assert ConfidenceKind.from_cli("nb") == NB
        assert ConfidenceKind.from_cli("nf", ratio=True).ratio
        with pytest.raises(ValueError):
            ConfidenceKind.from_cli("noblank")

    def test_short_names(self):
        assert NB.short_name == "nb"
        assert ConfidenceKind("raw", ratio=True).short_name == "raw-ratio"


class TestStats:
    def test_rejects_raw_above_best(self):
        with pytest.raises(ValueError):
            SegmentStats(-1.0, -2.0, 5, 0.0)

    def test_rejects_bad_blank_mass(self):
        with pytest.raises(ValueError):
            SegmentStats(-3.0, -1.0, 2, 3.0)


class TestScore:
    def test_raw_ten_frames(self):
        # 0.99 per frame over 10 frames: 0.9044, quoted as 0.90
        got = score(RAW, stats_for(0.99, 10, best_per_frame=1.0))
        assert got == pytest.approx(0.99**10, abs=1e-12)
        assert round(got, 2) == 0.90

    def test_raw_thirty_frames(self):
        got = score(RAW, stats_for(0.99, 30, best_per_frame=1.0))
        assert got == pytest.approx(0.99**30, abs=1e-12)
        assert round(got, 2) == 0.74

    @pytest.mark.parametrize("n", [1, 2, 5, 10, 100, 1000])
    def test_frames_normalized_is_per_frame_prob(self, n):
        got = score(NF, stats_for(0.37, n, best_per_frame=1.0))
        assert got == pytest.approx(0.37, abs=1e-12)

    def test_noblank_equals_frames_when_no_blank_mass(self):
        st_ = stats_for(0.8, 12, blank_mass=0.0, best_per_frame=1.0)
        assert score(NB, st_) == score(NF, st_)

    def test_ratio_is_one_when_raw_is_best(self):
        st_ = SegmentStats(-5.0, -5.0, 10, 2.0)
        for kind in ALL_KINDS:
            if kind.ratio:
                assert score(kind, st_) == pytest.approx(1.0, abs=1e-12)

    def test_blank_dilution(self):
        # appending sure-blank frames multiplies C_raw by one; the frame
        # normalizer then favors the diluted segment while the non-blank
        # count, growing by exactly the added frames, keeps C_nb fixed
        before = SegmentStats(-2.0, -1.0, 10, 3.0)
        after = SegmentStats(-2.0, -1.0, 15, 8.0)
        assert score(NF, after) > score(NF, before)
        assert score(NB, after) == pytest.approx(score(NB, before), abs=1e-12)

    def test_empty_segment_rejected(self):
        with pytest.raises(ValueError):
            score(RAW, SegmentStats(0.0, 0.0, 0, 0.0))

    def test_all_blank_segment_scores_zero(self):
        st_ = SegmentStats(-1.0, -0.5, 5, 5.0)
        assert score(NB, st_) == 0.0
        assert score(ConfidenceKind("noblank", ratio=True), st_) == 0.0

    def test_infeasible_scores_zero(self):
        st_ = SegmentStats(-math.inf, -1.0, 5, 1.0)
        for kind in ALL_KINDS:
            assert score(kind, st_) == 0.0

    @given(
        st.floats(-200.0, 0.0),
        st.floats(0.0, 50.0),
        st.integers(1, 200),
        st.floats(0.0, 1.0),
    )
    def test_all_kinds_in_unit_interval(self, log_best, gap, n, blank_frac):
        stats = SegmentStats(log_best - gap, log_best, n, blank_frac * n)
        for kind in ALL_KINDS:
            c = score(kind, stats)
            assert 0.0 <= c <= 1.0

    def test_ratio_preserves_ranking_within_segment(self):
        # same segment, three keywords with different raw scores
        base = dict(log_best=-1.0, n_frames=20, blank_mass=4.0)
        raws = [-9.0, -5.0, -7.0]
        for norm in ("raw", "frames", "noblank"):
            plain = [
                score(ConfidenceKind(norm), SegmentStats(lr, **base)) for lr in raws
            ]
            ratio = [
                score(ConfidenceKind(norm, ratio=True), SegmentStats(lr, **base))
                for lr in raws
            ]
            assert sorted(range(3), key=plain.__getitem__) == sorted(
                range(3), key=ratio.__getitem__
            )
