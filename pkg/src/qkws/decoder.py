"""Trie token-passing keyword search over posteriorgrams.

Each live token is one (trie node, start frame) hypothesis carrying the
two Viterbi scores a CTC lattice needs: best path ending in the node's
phone and best path ending in blank. Every frame the tokens advance, a
fresh token enters at the trie root, and terminal nodes emit detection
candidates whose confidence clears the threshold.

Search-space controls: a maximum segment length, pruning on per-frame
negative log likelihood, skipping frames dominated by blank, and a stride
for segment start and end positions.
"""

import math
from dataclasses import dataclass

import numpy as np

from .confidence import ConfidenceKind, SegmentStats, score
from .ctc import BLANK, PROB_FLOOR, Posteriorgram
from .keywords import KeywordTrie, TrieNode

LOG_ZERO = -math.inf

DEFAULT_CONFIDENCE = ConfidenceKind("noblank", ratio=False)


@dataclass(frozen=True)
class DecoderConfig:
    threshold: float = 0.5
    confidence: ConfidenceKind = DEFAULT_CONFIDENCE
    max_segment_frames: int = 30  # S_max, in original (unskipped) frames
    prune_nll: float = 2.5
    blank_skip: float = 0.95  # drop frames with p(blank) above this
    subsample: int = 1  # stride for segment starts and candidate emission

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.max_segment_frames < 1:
            raise ValueError("max_segment_frames must be >= 1")
        if not self.prune_nll > 0.0:
            raise ValueError("prune_nll must be positive")
        if not 0.0 < self.blank_skip <= 1.0:
            raise ValueError("blank_skip must lie in (0, 1]")
        if self.subsample < 1:
            raise ValueError("subsample must be >= 1")


@dataclass(frozen=True)
class DetectionCandidate:
    keyword: int
    start: int  # original frame indices, inclusive
    end: int
    confidence: float

    def overlaps(self, other: "DetectionCandidate") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass
class Token:
    node: TrieNode
    start: int  # kept-frame index where this hypothesis began
    score_label: float = LOG_ZERO  # last emitted label == node phone
    score_blank: float = LOG_ZERO  # last emitted label == blank
    frames: int = 0  # kept frames scored so far

    @property
    def best(self) -> float:
        return max(self.score_label, self.score_blank)


def prune(tokens, prune_nll: float) -> list[Token]:
    """Drop tokens whose average per-frame negative log likelihood is high."""
    kept = []
    for token in tokens:
        if token.frames and -token.best / token.frames > prune_nll:
            continue
        kept.append(token)
    return kept


def apply_blank_skip(
    post: Posteriorgram, threshold: float
) -> tuple[Posteriorgram, np.ndarray]:
    """Remove frames whose blank probability exceeds ``threshold``.

    Returns the filtered posteriorgram and the original index of each kept
    frame.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("blank skip threshold must lie in (0, 1]")
    mask = post.probs[:, BLANK] <= threshold
    index_map = np.nonzero(mask)[0]
    return Posteriorgram(post.probs[mask], validate=False), index_map


class StreamingDetector:
    """Frame-synchronous detector state for one audio stream."""

    def __init__(self, trie: KeywordTrie, config: DecoderConfig):
        self.trie = trie
        self.config = config
        self.reset()

    def reset(self):
        self._tokens: list[Token] = []
        self._frames_seen = 0  # original frames pushed
        self._kept_orig: list[int] = []  # kept index -> original index
        self._blank_prefix = [0.0]
        self._best_prefix = [0.0]

    @property
    def frames_seen(self) -> int:
        return self._frames_seen

    @property
    def frames_scored(self) -> int:
        """Frames that actually entered the search (blank-skip survivors)."""
        return len(self._kept_orig)

    def step(self, row: np.ndarray) -> list[DetectionCandidate]:
        """Advance by one posterior row; returns candidates ending here.

        Rows are read at float32, the posteriorgram exchange precision, so
        streaming a model's output and decoding a stored posteriorgram
        produce identical scores.
        """
        cfg = self.config
        row = np.asarray(row, dtype=np.float32)
        if row.ndim != 1 or row.shape[0] <= self.trie.max_phone:
            raise ValueError(
                f"posterior row has {row.shape} classes, trie needs "
                f"> {self.trie.max_phone}"
            )
        orig = self._frames_seen
        self._frames_seen += 1
        if float(row[BLANK]) > cfg.blank_skip:
            return []

        kept = len(self._kept_orig)
        self._kept_orig.append(orig)
        logp = np.log(np.maximum(row.astype(np.float64), PROB_FLOOR))
        self._blank_prefix.append(self._blank_prefix[-1] + float(row[BLANK]))
        self._best_prefix.append(self._best_prefix[-1] + float(np.max(logp)))
        log_blank = float(logp[BLANK])

        sources = self._tokens
        if orig % cfg.subsample == 0:
            # fresh hypothesis: empty path about to consume this frame
            sources = sources + [Token(self.trie.root, kept, LOG_ZERO, 0.0, 0)]

        new: dict[tuple[int, int], Token] = {}

        def upsert(node, start, label_score=LOG_ZERO, blank_score=LOG_ZERO):
            key = (node.node_id, start)
            token = new.get(key)
            if token is None:
                token = Token(node, start, frames=kept - start + 1)
                new[key] = token
            if label_score > token.score_label:
                token.score_label = label_score
            if blank_score > token.score_blank:
                token.score_blank = blank_score

        for token in sources:
            if orig - self._kept_orig[token.start] + 1 > cfg.max_segment_frames:
                continue
            a, b = token.score_label, token.score_blank
            node = token.node
            stay = max(a, b) + log_blank
            if stay > LOG_ZERO:
                upsert(node, token.start, blank_score=stay)
            if node.phone >= 0:
                # repeat the node's phone without collapsing
                again = a + float(logp[node.phone])
                if again > LOG_ZERO:
                    upsert(node, token.start, label_score=again)
            for child in node.children.values():
                # entering from the same phone requires a blank in between
                base = b if child.phone == node.phone else max(a, b)
                extend = base + float(logp[child.phone])
                if extend > LOG_ZERO:
                    upsert(child, token.start, label_score=extend)

        tokens = prune(new.values(), cfg.prune_nll)
        self._tokens = tokens

        if orig % cfg.subsample != 0:
            return []
        best_by_start: dict[tuple[int, int], float] = {}
        for token in tokens:
            node = token.node
            if not node.is_terminal:
                continue
            stats = SegmentStats(
                log_raw=token.best,
                log_best=self._best_prefix[kept + 1] - self._best_prefix[token.start],
                n_frames=token.frames,
                blank_mass=self._blank_prefix[kept + 1]
                - self._blank_prefix[token.start],
            )
            conf = score(cfg.confidence, stats)
            if conf > cfg.threshold:
                for kid in node.keyword_ids:
                    key = (kid, token.start)
                    if conf > best_by_start.get(key, -1.0):
                        best_by_start[key] = conf
        out = [
            DetectionCandidate(kid, self._kept_orig[start], orig, conf)
            for (kid, start), conf in best_by_start.items()
        ]
        out.sort(key=lambda c: (c.start, c.keyword))
        return out

    def process(self, post: Posteriorgram) -> list[DetectionCandidate]:
        candidates = []
        for t in range(len(post)):
            candidates.extend(self.step(post.probs[t]))
        return candidates


def detect(
    post: Posteriorgram, trie: KeywordTrie, config: DecoderConfig
) -> list[DetectionCandidate]:
    """All detection candidates in the posteriorgram, sorted by position."""
    if post.num_classes <= trie.max_phone:
        raise ValueError(
            f"posteriorgram has {post.num_classes} classes, trie needs "
            f"> {trie.max_phone}"
        )
    detector = StreamingDetector(trie, config)
    candidates = detector.process(post)
    candidates.sort(key=lambda c: (c.start, c.end, c.keyword))
    return candidates
