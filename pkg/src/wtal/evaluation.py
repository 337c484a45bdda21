"""Interval matching and detection metrics: IoU, per-class average
precision, mAP over IoU thresholds, and precision/recall/F-measure.

Ground-truth segments arrive as 1-based inclusive snippet index triples
(start, end, category); they are measured on the real line as the
interval [start - 1, end], the same unit proposals use.
"""

import json
from dataclasses import dataclass, field


@dataclass
class GroundTruthSegment:
    video_id: str
    start: float
    end: float
    category: int   # 1-based


def gt_from_videos(videos):
    """Flatten dataset ground truth into real-line segments."""
    segments = []
    for video in videos:
        if video.gt_segments is None:
            raise ValueError(
                f"video {video.id} has no ground truth; dataset is not "
                "usable for evaluation")
        for s, e, c in video.gt_segments:
            segments.append(GroundTruthSegment(video_id=video.id,
                                               start=float(s - 1),
                                               end=float(e), category=c))
    return segments


def iou(a, b):
    """Intersection over union of two (start, end) intervals on the real
    line; 0 when disjoint."""
    a_start, a_end = a
    b_start, b_end = b
    if a_start > a_end or b_start > b_end:
        raise ValueError("invalid interval")
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = (a_end - a_start) + (b_end - b_start) - inter
    return inter / union


def _sorted_proposals(proposals):
    return sorted(proposals,
                  key=lambda p: (-p.score, p.start, p.video_id))


def _match(proposals, gts, threshold):
    """Greedy matching in score order: each proposal takes the unmatched
    same-video GT with highest IoU >= threshold. Returns TP flags in the
    sorted proposal order."""
    ranked = _sorted_proposals(proposals)
    taken = [False] * len(gts)
    flags = []
    for p in ranked:
        best = -1
        best_iou = 0.0
        for gi, g in enumerate(gts):
            if taken[gi] or g.video_id != p.video_id:
                continue
            overlap = iou((p.start, p.end), (g.start, g.end))
            if overlap >= threshold and overlap > best_iou:
                best = gi
                best_iou = overlap
        if best >= 0:
            taken[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(proposals, gts, iou_threshold):
    """All-point average precision for one class.

    Returns None when there is no ground truth for the class (the class
    is then excluded from the mean, with a note in the report).
    """
    if not gts:
        return None
    flags = _match(proposals, gts, iou_threshold)
    tp = 0
    total = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
            total += tp / rank
    return total / len(gts)


@dataclass
class EvalReport:
    thresholds: list
    map_at_threshold: dict                 # threshold -> mAP
    average_map: float
    per_class_ap: dict                     # threshold -> {class: AP|None}
    precision: float
    recall: float
    f_measure: float
    tp: int
    fp: int
    num_gt: int
    notes: list = field(default_factory=list)

    def to_json(self):
        return {
            "thresholds": self.thresholds,
            "mAP": {f"{t:g}": self.map_at_threshold[t]
                    for t in self.thresholds},
            "average_mAP": self.average_map,
            "per_class_AP": {f"{t:g}": {str(c): ap for c, ap in
                                        self.per_class_ap[t].items()}
                             for t in self.thresholds},
            "precision_at_0.5": self.precision,
            "recall_at_0.5": self.recall,
            "f_measure_at_0.5": self.f_measure,
            "counts": {"TP": self.tp, "FP": self.fp, "GT": self.num_gt},
            "notes": self.notes,
        }

    def to_text(self):
        lines = ["threshold    mAP"]
        for t in self.thresholds:
            lines.append(f"{t:9.2f} {self.map_at_threshold[t]:8.4f}")
        lines.append(f"average mAP {self.average_map:8.4f}")
        lines.append(f"precision@0.5 {self.precision:.4f}  "
                     f"recall@0.5 {self.recall:.4f}  "
                     f"F-measure {self.f_measure:.4f}")
        lines.append(f"TP {self.tp}  FP {self.fp}  GT {self.num_gt}")
        return "\n".join(lines) + "\n"


def map_at(proposals, gts, thresholds, num_classes):
    """Mean over classes of AP at each threshold, plus the average mAP
    over the threshold list. Classes with no GT are excluded."""
    if not gts:
        raise ValueError("no ground truth segments")
    per_class = {}
    map_values = {}
    notes = []
    by_class_props = {c: [] for c in range(1, num_classes + 1)}
    by_class_gts = {c: [] for c in range(1, num_classes + 1)}
    for p in proposals:
        by_class_props.setdefault(p.category, []).append(p)
    for g in gts:
        by_class_gts.setdefault(g.category, []).append(g)
    for threshold in thresholds:
        aps = {}
        for c in range(1, num_classes + 1):
            ap = average_precision(by_class_props[c], by_class_gts[c],
                                   threshold)
            aps[c] = ap
            if ap is None and threshold == thresholds[0]:
                notes.append(f"class {c}: no ground truth, excluded")
        per_class[threshold] = aps
        valid = [ap for ap in aps.values() if ap is not None]
        map_values[threshold] = sum(valid) / len(valid) if valid else 0.0
    return per_class, map_values, notes


def precision_recall_f(proposals, gts, iou_threshold=0.5):
    """Detection precision/recall/F at one IoU threshold, greedy matching
    per class and per video in descending score order."""
    tp = 0
    classes = sorted({g.category for g in gts}
                     | {p.category for p in proposals})
    for c in classes:
        flags = _match([p for p in proposals if p.category == c],
                       [g for g in gts if g.category == c], iou_threshold)
        tp += sum(flags)
    n_props = len(proposals)
    n_gt = len(gts)
    precision = tp / n_props if n_props else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f = 2 * precision * recall / (precision + recall) \
        if precision + recall > 0 else 0.0
    return precision, recall, f


def evaluate(proposals, gts, thresholds, num_classes):
    """Full report: mAP at each threshold plus P/R/F at IoU 0.5."""
    per_class, map_values, notes = map_at(proposals, gts, thresholds,
                                          num_classes)
    precision, recall, f = precision_recall_f(proposals, gts, 0.5)
    tp = round(precision * len(proposals))
    return EvalReport(
        thresholds=list(thresholds),
        map_at_threshold=map_values,
        average_map=sum(map_values.values()) / len(thresholds),
        per_class_ap=per_class,
        precision=precision, recall=recall, f_measure=f,
        tp=tp, fp=len(proposals) - tp, num_gt=len(gts),
        notes=notes)


def save_report(path_json, path_text, report):
    with open(path_json, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path_text, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
