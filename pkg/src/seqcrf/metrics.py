"""Segmentation metrics and label post-processing.

All scores are percentages in ``[0, 100]``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


class Segment(NamedTuple):
    start: int  # inclusive
    end: int  # exclusive
    label: int


def _pair(pred, truth):
    pred, truth = np.asarray(pred, dtype=int), np.asarray(truth, dtype=int)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InvalidInputError(f"label sequences differ in shape: {pred.shape} vs {truth.shape}")
    return pred, truth


def frame_accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise InvalidInputError("empty label sequence")
    return 100.0 * np.count_nonzero(pred == truth) / pred.size


def segments_from_labels(y) -> list[Segment]:
    """Maximal runs of equal labels, in temporal order."""
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(y)) + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts, [y.size]])
    return [Segment(int(s), int(e), int(y[s])) for s, e in zip(starts, ends)]


def labels_from_segments(segments, T: int | None = None) -> np.ndarray:
    if T is None:
        T = segments[-1].end if segments else 0
    y = np.empty(T, dtype=int)
    for s, e, lab in segments:
        y[s:e] = lab
    return y


def levenshtein(a, b) -> int:
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, ai in enumerate(a, 1):
        cur = [i]
        for j, bj in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ai != bj)))
        prev = cur
    return prev[-1]


def edit_score(pred, truth, background: int | None = None) -> float:
    """``100 * (1 - lev / max(len))`` over the segment label strings.

    Segments labelled ``background`` are dropped first when it is given.
    """
    pred, truth = _pair(pred, truth)
    sp = [s.label for s in segments_from_labels(pred) if s.label != background]
    st = [s.label for s in segments_from_labels(truth) if s.label != background]
    n = max(len(sp), len(st))
    if n == 0:
        return 100.0
    return max(0.0, 100.0 * (1.0 - levenshtein(sp, st) / n))


def segmental_f1(pred, truth, k: float = 10, background: int | None = None) -> float:
    """Segmental F1 at ``k`` percent IoU overlap.

    Predicted segments are visited in temporal order; each one is a true
    positive when its best-IoU unmatched ground-truth segment of the same label
    reaches ``k / 100``. A ground-truth segment can be matched once.
    """
    pred, truth = _pair(pred, truth)
    ps = [s for s in segments_from_labels(pred) if s.label != background]
    ts = [s for s in segments_from_labels(truth) if s.label != background]
    if not ps or not ts:
        return 0.0
    thr = k / 100.0
    used = [False] * len(ts)
    tp = 0
    for p in ps:
        best, best_iou = -1, -1.0
        for i, g in enumerate(ts):
            if used[i] or g.label != p.label:
                continue
            inter = max(0, min(p.end, g.end) - max(p.start, g.start))
            union = max(p.end, g.end) - min(p.start, g.start)
            iou = inter / union
            if iou > best_iou:
                best, best_iou = i, iou
        if best >= 0 and best_iou >= thr:
            used[best] = True
            tp += 1
    precision, recall = tp / len(ps), tp / len(ts)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def median_filter(y, window: int, mode: bool = False) -> np.ndarray:
    """Slide a clipped window over the label ids.

    ``mode=False`` takes the (lower) median of the ids in each window;
    ``mode=True`` takes the most frequent id, ties to the lowest.
    """
    if int(window) != window or window < 1 or window % 2 == 0:
        raise InvalidConfigError(f"median window must be an odd positive integer, got {window}")
    y = np.asarray(y, dtype=int)
    half = int(window) // 2
    out = np.empty_like(y)
    for t in range(y.size):
        chunk = y[max(0, t - half):t + half + 1]
        if mode:
            vals, counts = np.unique(chunk, return_counts=True)
            out[t] = vals[np.argmax(counts)]
        else:
            out[t] = np.sort(chunk)[(chunk.size - 1) // 2]
    return out
