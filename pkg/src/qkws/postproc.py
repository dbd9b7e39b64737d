"""Reduce overlapping detection candidates to one keyword sequence.

Two strategies: a greedy scan that commits to the best candidate at each
end time, and a dynamic program over end times that maximizes the total
confidence of a non-overlapping candidate subset.
"""

from .decoder import DetectionCandidate


def _ordered(candidates) -> list[DetectionCandidate]:
    return sorted(candidates, key=lambda c: (c.end, c.start, c.keyword))


def check_sequence(detections: list[DetectionCandidate]):
    """Raise unless detections are strictly increasing, non-overlapping."""
    for prev, cur in zip(detections, detections[1:]):
        if prev.end >= cur.start:
            raise ValueError(
                f"detections overlap: [{prev.start},{prev.end}] then "
                f"[{cur.start},{cur.end}]"
            )


def greedy(candidates) -> list[DetectionCandidate]:
    """Commit to the best candidate at each end time, dropping overlaps.

    Ties at one end time prefer higher confidence, then the longer
    segment, then the lower keyword id.
    """
    out: list[DetectionCandidate] = []
    last_end = -1
    group: list[DetectionCandidate] = []
    for cand in _ordered(candidates):
        if cand.start <= last_end:
            continue
        if group and cand.end != group[0].end:
            best = max(group, key=lambda c: (c.confidence, c.end - c.start, -c.keyword))
            out.append(best)
            last_end = best.end
            group = []
            if cand.start <= last_end:
                continue
        group.append(cand)
    if group:
        out.append(max(group, key=lambda c: (c.confidence, c.end - c.start, -c.keyword)))
    return out


def sequence(candidates) -> list[DetectionCandidate]:
    """Non-overlapping candidate subset with maximum total confidence.

    Weighted interval scheduling over frame boundaries: best(t) is the
    top total using candidates ending before t, and each candidate c
    competes as confidence(c) + best(c.start). Ties keep the solution
    with fewer detections and earlier end times.
    """
    cands = _ordered(candidates)
    if not cands:
        return []
    horizon = cands[-1].end + 2
    best = [0.0] * horizon
    take: list[DetectionCandidate | None] = [None] * horizon
    idx = 0
    for t in range(1, horizon):
        best[t] = best[t - 1]
        take[t] = None
        while idx < len(cands) and cands[idx].end == t - 1:
            cand = cands[idx]
            idx += 1
            total = best[cand.start] + cand.confidence
            if total > best[t]:
                best[t] = total
                take[t] = cand
    out = []
    t = horizon - 1
    while t > 0:
        cand = take[t]
        if cand is None:
            t -= 1
        else:
            out.append(cand)
            t = cand.start
    out.reverse()
    return out
