"""CTC score algebra over posteriorgram segments.

All scores are kept in the log domain; products over hundreds of frames
underflow in linear probabilities long before a query ends. Functions
return log probabilities, with -inf standing for probability zero.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

BLANK = 0

# Quantized softmax outputs can be exactly zero; floor before the log so
# every path score stays finite.
PROB_FLOOR = 1e-12

LOG_ZERO = -np.inf


class Posteriorgram:
    """Per-frame class posteriors, one row per frame, blank at column 0.

    Probabilities are held as float32, the precision of the on-disk
    exchange format, so a write/read round trip is bit-exact. Log scores
    and the prefix-sum caches used for O(1) segment queries are derived
    lazily in float64.
    """

    __slots__ = ("probs", "_log_probs", "_blank_prefix", "_best_prefix")

    def __init__(self, probs, validate: bool = True):
        arr = np.asarray(probs, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"posteriorgram must be 2-D, got shape {arr.shape}")
        if validate and arr.shape[0]:
            if np.min(arr) < 0.0 or np.max(arr) > 1.0:
                raise ValueError("posterior entries must lie in [0, 1]")
            sums = arr.sum(axis=1, dtype=np.float64)
            worst = float(np.max(np.abs(sums - 1.0)))
            if worst > 1e-6:
                raise ValueError(f"posterior rows must sum to 1 (off by {worst:g})")
        self.probs = arr
        self._log_probs = None
        self._blank_prefix = None
        self._best_prefix = None

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def log_probs(self) -> np.ndarray:
        if self._log_probs is None:
            floored = np.maximum(self.probs.astype(np.float64), PROB_FLOOR)
            self._log_probs = np.log(floored)
        return self._log_probs

    @property
    def blank_prefix(self) -> np.ndarray:
        """blank_prefix[t] = sum of blank probabilities over frames < t."""
        if self._blank_prefix is None:
            col = self.probs[:, BLANK].astype(np.float64)
            self._blank_prefix = np.concatenate(([0.0], np.cumsum(col)))
        return self._blank_prefix

    @property
    def best_path_prefix(self) -> np.ndarray:
        """best_path_prefix[t] = sum over frames < t of max log prob."""
        if self._best_prefix is None:
            if len(self):
                row_max = np.max(self.log_probs, axis=1)
            else:
                row_max = np.zeros(0)
            self._best_prefix = np.concatenate(([0.0], np.cumsum(row_max)))
        return self._best_prefix


@dataclass(frozen=True)
class Segment:
    """Inclusive frame range [start, end], 0-based."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid segment [{self.start}, {self.end}]")

    @property
    def frames(self) -> int:
        return self.end - self.start + 1

    def check_within(self, num_frames: int):
        if self.end >= num_frames:
            raise ValueError(
                f"segment [{self.start}, {self.end}] exceeds {num_frames} frames"
            )


def collapse(labels: Sequence[int], blank: int = BLANK) -> list[int]:
    """Apply the CTC collapse: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for label in labels:
        if label != prev:
            if label != blank:
                out.append(label)
            prev = label
    return out


def _check_phones(post: Posteriorgram, phones: Sequence[int]):
    for p in phones:
        if not 1 <= p < post.num_classes:
            raise ValueError(f"phone index {p} outside [1, {post.num_classes - 1}]")


def _extended_labels(phones: Sequence[int]) -> np.ndarray:
    ext = np.zeros(2 * len(phones) + 1, dtype=np.int64)
    ext[1::2] = phones
    return ext


def ctc_forward(post: Posteriorgram, segment: Segment, phones: Sequence[int]) -> float:
    """Log probability that the segment's labels collapse to ``phones``.

    Standard forward pass over the blank-interleaved state lattice,
    summing over every alignment. Returns -inf when no alignment fits.
    """
    segment.check_within(len(post))
    _check_phones(post, phones)
    lp = post.log_probs
    length = len(phones)
    if length == 0:
        return float(np.sum(lp[segment.start : segment.end + 1, BLANK]))
    if length > segment.frames:
        return LOG_ZERO

    ext = _extended_labels(phones)
    num_states = ext.size
    # skip transition s-2 -> s is legal for label states with a different
    # label two states back
    can_skip = np.zeros(num_states, dtype=bool)
    can_skip[3::2] = ext[3::2] != ext[1:-2:2]

    alpha = np.full(num_states, LOG_ZERO)
    alpha[0] = lp[segment.start, BLANK]
    alpha[1] = lp[segment.start, phones[0]]
    for t in range(segment.start + 1, segment.end + 1):
        stay = alpha
        step = np.concatenate(([LOG_ZERO], alpha[:-1]))
        merged = np.logaddexp(stay, step)
        skip = np.concatenate(([LOG_ZERO, LOG_ZERO], alpha[:-2]))
        merged = np.where(can_skip, np.logaddexp(merged, skip), merged)
        alpha = merged + lp[t, ext]
    return float(np.logaddexp(alpha[-1], alpha[-2]))


def ctc_viterbi(
    post: Posteriorgram, segment: Segment, phones: Sequence[int]
) -> tuple[float, list[int]]:
    """Best single alignment collapsing to ``phones``: (log prob, labels).

    The returned label path covers every frame of the segment; an
    infeasible request yields (-inf, []).
    """
    segment.check_within(len(post))
    _check_phones(post, phones)
    lp = post.log_probs
    length = len(phones)
    if length == 0:
        path = [BLANK] * segment.frames
        return float(np.sum(lp[segment.start : segment.end + 1, BLANK])), path
    if length > segment.frames:
        return LOG_ZERO, []

    ext = _extended_labels(phones)
    num_states = ext.size
    can_skip = np.zeros(num_states, dtype=bool)
    can_skip[3::2] = ext[3::2] != ext[1:-2:2]

    alpha = np.full(num_states, LOG_ZERO)
    alpha[0] = lp[segment.start, BLANK]
    alpha[1] = lp[segment.start, phones[0]]
    back = np.zeros((segment.frames, num_states), dtype=np.int8)
    for i, t in enumerate(range(segment.start + 1, segment.end + 1), start=1):
        stay = alpha
        step = np.concatenate(([LOG_ZERO], alpha[:-1]))
        skip = np.concatenate(([LOG_ZERO, LOG_ZERO], alpha[:-2]))
        skip = np.where(can_skip, skip, LOG_ZERO)
        stacked = np.stack((stay, step, skip))
        choice = np.argmax(stacked, axis=0)
        back[i] = choice
        alpha = stacked[choice, np.arange(num_states)] + lp[t, ext]

    if alpha[-1] >= alpha[-2]:
        state = num_states - 1
    else:
        state = num_states - 2
    best = float(alpha[state])
    if best == LOG_ZERO:
        return LOG_ZERO, []
    states = [state]
    for i in range(segment.frames - 1, 0, -1):
        state -= int(back[i, state])
        states.append(state)
    states.reverse()
    return best, [int(ext[s]) for s in states]


def best_path_score(post: Posteriorgram, segment: Segment) -> float:
    """Log probability of the unconstrained best label sequence."""
    segment.check_within(len(post))
    prefix = post.best_path_prefix
    return float(prefix[segment.end + 1] - prefix[segment.start])


def blank_mass(post: Posteriorgram, segment: Segment) -> float:
    """Expected number of blank frames in the segment (prefix-sum lookup)."""
    segment.check_within(len(post))
    prefix = post.blank_prefix
    return float(prefix[segment.end + 1] - prefix[segment.start])
