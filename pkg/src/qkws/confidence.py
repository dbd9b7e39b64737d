"""Keyword confidence calibration.

A raw CTC segment score is a product of per-frame probabilities, so it
shrinks with segment length and is dominated by uninformative blank
frames. The score family here fixes that: normalize by the frame count,
or by the estimated number of non-blank frames, and optionally divide by
the score of the best unconstrained label sequence.
"""

import math
from dataclasses import dataclass

NORMALIZATIONS = ("raw", "frames", "noblank")

# Segments whose estimated non-blank mass falls below half a frame carry
# no keyword evidence; their confidence is defined as zero.
MIN_NONBLANK_FRAMES = 0.5

_CLI_NAMES = {"raw": "raw", "nf": "frames", "nb": "noblank"}
_SHORT_NAMES = {"raw": "raw", "frames": "nf", "noblank": "nb"}


@dataclass(frozen=True)
class ConfidenceKind:
    """One of the six confidence variants: a normalization plus ratio flag."""

    normalization: str
    ratio: bool = False

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @classmethod
    def from_cli(cls, name: str, ratio: bool = False) -> "ConfidenceKind":
        if name not in _CLI_NAMES:
            raise ValueError(f"unknown confidence name {name!r}")
        return cls(_CLI_NAMES[name], ratio)

    @property
    def short_name(self) -> str:
        base = _SHORT_NAMES[self.normalization]
        return base + "-ratio" if self.ratio else base


@dataclass(frozen=True)
class SegmentStats:
    """Raw material for one confidence evaluation.

    log_raw: best constrained alignment score (Viterbi, log domain)
    log_best: unconstrained best-path score over the same frames
    n_frames: number of frames actually scored
    blank_mass: sum of blank probabilities over those frames
    """

    log_raw: float
    log_best: float
    n_frames: int
    blank_mass: float

    def __post_init__(self):
        if self.n_frames < 0:
            raise ValueError("negative frame count")
        if self.log_raw > self.log_best + 1e-6:
            raise ValueError(
                f"constrained score {self.log_raw} exceeds best path {self.log_best}"
            )
        if not -1e-9 <= self.blank_mass <= self.n_frames + 1e-9:
            raise ValueError(
                f"blank mass {self.blank_mass} outside [0, {self.n_frames}]"
            )


def score(kind: ConfidenceKind, stats: SegmentStats) -> float:
    """Confidence in [0, 1] for a scored segment."""
    if stats.n_frames == 0:
        raise ValueError("cannot score an empty segment")
    if stats.log_raw == -math.inf:
        # no feasible alignment: zero confidence under every variant
        return 0.0
    log_c = stats.log_raw - stats.log_best if kind.ratio else stats.log_raw
    if kind.normalization == "frames":
        log_c /= stats.n_frames
    elif kind.normalization == "noblank":
        nonblank = stats.n_frames - stats.blank_mass
        if nonblank < MIN_NONBLANK_FRAMES:
            return 0.0
        log_c /= nonblank
    if log_c == -math.inf:
        return 0.0
    return min(1.0, max(0.0, math.exp(min(log_c, 0.0))))
