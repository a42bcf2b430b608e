"""Forward/backward location prediction for cells via template matching.

The built-in matcher does an exhaustive zero-normalized cross-correlation
search over a fixed-size window; external predictions can be loaded from a
text file so a learned tracker can be swapped in without code changes.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class TrackerConfig:
    search_size: int = 150  # square search window side, pixels
    template_pad: int = 2  # padding around the cell bbox
    min_score: float = 0.2  # below this the prediction is "no match"

    def __post_init__(self):
        if self.template_pad < 0:
            raise ValueError("template_pad must be >= 0")
        if not -1.0 <= self.min_score <= 1.0:
            raise ValueError("min_score must lie in [-1, 1]")


@dataclass(frozen=True)
class TrackerPrediction:
    source_cell_id: int
    direction: str
    region: tuple  # inclusive (top, left, bottom, right) in the adjacent frame
    score: float
    valid: bool


def ncc_score(template, candidate):
    """Zero-normalized cross-correlation of two equal-shape patches.

    Returns a value in [-1, 1]; 0 when either patch has zero variance.
    """
    template = np.asarray(template, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if template.shape != candidate.shape:
        raise ValueError("patch shapes differ: %s vs %s" % (template.shape, candidate.shape))
    t0 = template - template.mean()
    c0 = candidate - candidate.mean()
    denom = np.sqrt(np.sum(t0 * t0) * np.sum(c0 * c0))
    if denom <= 1e-12:
        return 0.0
    return float(np.clip(np.sum(t0 * c0) / denom, -1.0, 1.0))


def _template_bbox(cell, pad, height, width):
    top, left, bottom, right = cell.bbox
    return (
        max(0, top - pad),
        max(0, left - pad),
        min(height - 1, bottom + pad),
        min(width - 1, right + pad),
    )


def predict(frame_src, frame_dst, cell, direction, config=TrackerConfig()):
    """Best placement of the cell's padded template in the adjacent frame.

    The search window is config.search_size squared, centered on the
    template center and clipped to the image (grown back inward so the
    template always fits). NCC ties break to the row-major earliest
    placement; a zero-variance or frame-exceeding template is invalid.
    """
    h, w = frame_src.pixels.shape
    if frame_dst.pixels.shape != (h, w):
        raise ValueError("source and destination frames differ in size")
    tb = _template_bbox(cell, config.template_pad, h, w)
    th = tb[2] - tb[0] + 1
    tw = tb[3] - tb[1] + 1
    invalid = lambda score: TrackerPrediction(cell.id, direction, tb, score, False)
    if th > h or tw > w:
        return invalid(-1.0)
    template = frame_src.normalized()[tb[0] : tb[2] + 1, tb[1] : tb[3] + 1]
    if np.ptp(template) == 0:
        return invalid(0.0)

    def window_span(center, tlen, flen):
        # search_size window centered on the template, clipped to the frame,
        # grown back inward when the clip leaves no room for the template
        lo = int(round(center)) - config.search_size // 2
        hi = min(flen - 1, lo + config.search_size - 1)
        lo = max(0, lo)
        if hi - lo + 1 < tlen:
            lo = max(0, min(lo, flen - tlen))
            hi = lo + tlen - 1
        return lo, hi

    wtop, wbottom = window_span((tb[0] + tb[2]) / 2.0, th, h)
    wleft, wright = window_span((tb[1] + tb[3]) / 2.0, tw, w)

    window = frame_dst.normalized()[wtop : wbottom + 1, wleft : wright + 1]
    r, c, score = kernels.ncc_best(window, template)
    region = (wtop + r, wleft + c, wtop + r + th - 1, wleft + c + tw - 1)
    return TrackerPrediction(cell.id, direction, region, score, score >= config.min_score)


class NCCTracker:
    """Built-in template-matching tracker."""

    def __init__(self, config=TrackerConfig()):
        self.config = config

    def predict(self, frame_src, frame_dst, cell, direction):
        return predict(frame_src, frame_dst, cell, direction, self.config)


class ExternalTracker:
    """Predictions preloaded from files; unknown (frame, cell) pairs are invalid."""

    def __init__(self, forward_path=None, backward_path=None, frame_shape=None):
        self._preds = {}
        if forward_path:
            self._load(forward_path, FORWARD, frame_shape)
        if backward_path:
            self._load(backward_path, BACKWARD, frame_shape)

    def _load(self, path, direction, frame_shape):
        for lineno, line in enumerate(open(path), start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 7:
                raise ValueError("%s:%d: expected 7 fields, got %d" % (path, lineno, len(parts)))
            t, cell_id, top, left, bottom, right = (int(p) for p in parts[:6])
            score = float(parts[6])
            if t < 1 or top > bottom or left > right or top < 0 or left < 0:
                raise ValueError("%s:%d: invalid region" % (path, lineno))
            if frame_shape is not None and (bottom >= frame_shape[0] or right >= frame_shape[1]):
                raise ValueError("%s:%d: region exceeds frame bounds" % (path, lineno))
            if not -1.0 <= score <= 1.0:
                raise ValueError("%s:%d: score outside [-1, 1]" % (path, lineno))
            self._preds[(t, cell_id, direction)] = (top, left, bottom, right, score)

    def predict(self, frame_src, frame_dst, cell, direction):
        rec = self._preds.get((frame_src.index, cell.id, direction))
        if rec is None:
            return TrackerPrediction(cell.id, direction, cell.bbox, -1.0, False)
        top, left, bottom, right, score = rec
        return TrackerPrediction(cell.id, direction, (top, left, bottom, right), score, True)


def predict_all(sequence, cells_by_frame, direction, config=TrackerConfig()):
    """One prediction per (frame, cell) pair that has an adjacent frame.

    `cells_by_frame` maps 1-based frame index to that frame's cells.
    Returns {(frame_index, cell_id): TrackerPrediction}.
    """
    step = 1 if direction == FORWARD else -1
    out = {}
    for t in range(1, len(sequence) + 1):
        if not 1 <= t + step <= len(sequence):
            continue
        for cell in cells_by_frame.get(t, []):
            out[(t, cell.id)] = predict(sequence[t], sequence[t + step], cell, direction, config)
    return out
