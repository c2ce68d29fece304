"""Detection and recognition metrics: IoU, greedy matching, P/R/F1, AP, plate accuracy."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import DegenerateBox, NoGroundTruth, NoPlateInSequence, ValidationError
from .recognize import recognize_sequence
from .types import Detection, GroundTruthRecord


def iou(a, b) -> float:
    """Intersection over union of two half-open ``(x0, y0, x1, y1)`` boxes."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    if ax1 <= ax0 or ay1 <= ay0 or bx1 <= bx0 or by1 <= by0:
        raise DegenerateBox(f"zero-area box in iou({a}, {b})")
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(1.0, inter / union)


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    matched_pairs: List[Tuple[Detection, GroundTruthRecord, float]] = field(default_factory=list)
    # per ranked detection: True if it matched; same order as confidence ranking
    ranked_hits: List[bool] = field(default_factory=list, repr=False)


def _ranked(dets):
    # stable sort keeps input order among equal confidences
    return sorted(dets, key=lambda d: -d.confidence)


def match_detections(dets: Iterable[Detection], gts: Iterable[GroundTruthRecord],
                     iou_threshold: float = 0.5) -> MatchResult:
    """Greedy matching in descending confidence.

    Each detection takes the still-unmatched ground truth of highest IoU in
    the same frame, provided that IoU reaches ``iou_threshold``.
    """
    by_frame = defaultdict(list)
    for g in gts:
        by_frame[g.frame_index].append(g)
    n_gt = sum(len(v) for v in by_frame.values())
    used = set()
    pairs, hits = [], []
    for d in _ranked(dets):
        best, best_iou = None, -1.0
        for j, g in enumerate(by_frame.get(d.frame_index, ())):
            if (d.frame_index, j) in used:
                continue
            v = iou(d.bbox, g.bbox)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = j, v
        if best is None:
            hits.append(False)
            continue
        used.add((d.frame_index, best))
        pairs.append((d, by_frame[d.frame_index][best], best_iou))
        hits.append(True)
    tp = len(pairs)
    return MatchResult(tp, len(hits) - tp, n_gt - tp, pairs, hits)


@dataclass(frozen=True)
class PRF:
    """Precision, recall and F1; iterates as ``(p, r, f1)``.

    When a ratio has a zero denominator its value is 0 and the matching
    ``*_defined`` flag is False.
    """

    precision: float
    recall: float
    f1: float
    precision_defined: bool = True
    recall_defined: bool = True

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def precision_recall_f1(m: MatchResult) -> PRF:
    p_def = m.tp + m.fp > 0
    r_def = m.tp + m.fn > 0
    p = m.tp / (m.tp + m.fp) if p_def else 0.0
    r = m.tp / (m.tp + m.fn) if r_def else 0.0
    return PRF(p, r, f1_score(p, r), p_def, r_def)


def average_precision(dets: Iterable[Detection], gts: Iterable[GroundTruthRecord],
                      iou_threshold: float = 0.5, method: str = "all") -> float:
    """Area under the interpolated precision/recall curve.

    ``method="all"`` integrates over every recall step; ``"11"`` averages the
    interpolated precision at recall 0, 0.1, ..., 1.0.
    """
    gts = list(gts)
    if not gts:
        raise NoGroundTruth("average precision needs at least one ground-truth box")
    if method not in ("all", "11"):
        raise ValidationError(f"unknown AP method {method!r}")
    hits = match_detections(dets, gts, iou_threshold).ranked_hits
    precision, recall = [], []
    tp = 0
    for i, hit in enumerate(hits, 1):
        tp += hit
        precision.append(tp / i)
        recall.append(tp / len(gts))
    # precision envelope: max precision at any recall >= this point
    env = precision[:]
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    if method == "11":
        total = 0.0
        for t in range(11):
            level = t / 10
            total += max((e for e, r in zip(env, recall) if r >= level - 1e-12), default=0.0)
        return total / 11
    ap, prev_r = 0.0, 0.0
    for e, r in zip(env, recall):
        if r > prev_r:
            ap += (r - prev_r) * e
            prev_r = r
    return ap


def char_match_count(pred: Optional[str], gt: str) -> int:
    """Positional character matches; missing or extra positions count as mismatches."""
    if not pred:
        return 0
    return sum(a == b for a, b in zip(pred, gt))


def recognition_accuracy(results: Mapping[int, Optional[str]], gts: Mapping[int, str],
                         min_chars: int) -> float:
    """Fraction of ground-truth instances whose plate has at least ``min_chars`` correct."""
    if not gts:
        return 0.0
    ok = sum(char_match_count(results.get(k), g) >= min_chars for k, g in gts.items())
    return ok / len(gts)


def truth_plates(gts: Iterable[GroundTruthRecord]) -> Dict[int, str]:
    """Plate string per instance (the most frequent one if records disagree)."""
    per = defaultdict(Counter)
    for g in gts:
        per[g.instance_id][g.plate_string] += 1
    return {k: c.most_common(1)[0][0] for k, c in sorted(per.items())}


def plates_from_detections(dets: Iterable[Detection]) -> Dict[int, str]:
    """Majority-vote plate per instance from the per-frame ``plate`` fields."""
    per = defaultdict(list)
    for d in dets:
        per[d.instance_id].append((d.plate, d.confidence))
    out = {}
    for k, votes in sorted(per.items()):
        try:
            out[k] = recognize_sequence(votes)
        except NoPlateInSequence:
            pass
    return out


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    ap: float
    acc: Dict[int, float]
    num_tp: int
    num_gt: int
    det_tp: int
    det_fp: int
    det_fn: int
    iou_threshold: float
    min_chars: int = 7
    precision_defined: bool = True
    recall_defined: bool = True

    @property
    def acc6(self) -> float:
        return self.acc[6]

    @property
    def acc7(self) -> float:
        return self.acc[7]

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1, "ap": self.ap,
            "acc": {str(k): v for k, v in sorted(self.acc.items())},
            "acc6": self.acc6, "acc7": self.acc7,
            "num_tp": self.num_tp, "num_gt": self.num_gt,
            "det_tp": self.det_tp, "det_fp": self.det_fp, "det_fn": self.det_fn,
            "iou_threshold": self.iou_threshold, "min_chars": self.min_chars,
            "precision_defined": self.precision_defined, "recall_defined": self.recall_defined,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format_table(self) -> str:
        rows = [
            ("precision", f"{100 * self.precision:.2f}"),
            ("recall", f"{100 * self.recall:.2f}"),
            ("F1", f"{100 * self.f1:.2f}"),
            ("AP", f"{100 * self.ap:.2f}"),
        ]
        rows += [(f"acc >= {k} chars", f"{100 * v:.2f}") for k, v in sorted(self.acc.items())]
        rows += [
            ("detections TP/FP/FN", f"{self.det_tp}/{self.det_fp}/{self.det_fn}"),
            (f"plates correct (>= {self.min_chars}) / instances", f"{self.num_tp}/{self.num_gt}"),
            ("IoU threshold", f"{self.iou_threshold:g}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def evaluate(dets: Sequence[Detection], gts: Sequence[GroundTruthRecord],
             plates: Optional[Mapping[int, str]] = None, iou_threshold: float = 0.5,
             min_chars: int = 7, ap_method: str = "all") -> EvalReport:
    """Full report. ``plates`` defaults to a vote over the detections' plate fields."""
    dets, gts = list(dets), list(gts)
    m = match_detections(dets, gts, iou_threshold)
    prf = precision_recall_f1(m)
    ap = average_precision(dets, gts, iou_threshold, ap_method)
    if plates is None:
        plates = plates_from_detections(dets)
    truth = truth_plates(gts)
    acc = {n: recognition_accuracy(plates, truth, n) for n in sorted({6, 7, min_chars})}
    num_tp = sum(char_match_count(plates.get(k), g) >= min_chars for k, g in truth.items())
    return EvalReport(prf.precision, prf.recall, prf.f1, ap, acc, num_tp, len(truth),
                      m.tp, m.fp, m.fn, iou_threshold, min_chars,
                      prf.precision_defined, prf.recall_defined)
