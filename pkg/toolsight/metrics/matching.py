"""Per-frame matching of predicted and ground-truth keypoints."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from toolsight import config
from toolsight.exceptions import FormatError, TaxonomyMismatchError
from toolsight.models.models import ClassTaxonomy, KeypointAnnotation, MatchRecord, TrackResult

logger = logging.getLogger(__name__)


def _check_classes(class_ids, taxonomy: ClassTaxonomy, source: str) -> None:
    for class_id in class_ids:
        if not 1 <= class_id < taxonomy.num_classes:
            raise TaxonomyMismatchError(
                f"{source} uses class id {class_id}, taxonomy has classes 1..{taxonomy.num_classes - 1}"
            )


def match_frame(
    preds: TrackResult,
    gts: KeypointAnnotation,
    tau: float,
    taxonomy: Optional[ClassTaxonomy] = None,
) -> List[MatchRecord]:
    """
    Match the detections of one frame to its annotation.

    Within each class, prediction/ground-truth pairs closer than ``tau`` are
    accepted greedily by ascending distance. Leftover predictions are false
    positives, leftover visible keypoints false negatives; invisible
    keypoints take no part.

    Args:
        preds: Detections of the frame
        gts: Annotation of the same frame
        tau: Match threshold in pixels
        taxonomy: When given, every class id must belong to it

    Returns:
        Records ordered by class, then TP, FP, FN

    Raises:
        TaxonomyMismatchError: If a class id is outside the taxonomy
    """
    if taxonomy is not None:
        _check_classes((d.class_id for d in preds.detections), taxonomy, "prediction")
        _check_classes((k.class_id for k in gts.keypoints), taxonomy, "annotation")
    video_id = gts.video_id or preds.video_id
    frame = gts.frame_index
    records = []
    classes = sorted({d.class_id for d in preds.detections} | {k.class_id for k in gts.keypoints if k.visible})
    for class_id in classes:
        pred_points = [(d.x, d.y) for d in preds.detections if d.class_id == class_id]
        gt_points = [(k.x, k.y) for k in gts.keypoints if k.class_id == class_id and k.visible]
        pairs = sorted(
            (float(np.hypot(p[0] - g[0], p[1] - g[1])), i, j)
            for i, p in enumerate(pred_points)
            for j, g in enumerate(gt_points)
        )
        used_pred, used_gt = set(), set()
        for distance, i, j in pairs:
            if distance > tau:
                break
            if i in used_pred or j in used_gt:
                continue
            used_pred.add(i)
            used_gt.add(j)
            records.append(
                MatchRecord(
                    video_id=video_id,
                    frame_index=frame,
                    class_id=class_id,
                    gt=gt_points[j],
                    pred=pred_points[i],
                    error=distance,
                    outcome="TP",
                )
            )
        for i, p in enumerate(pred_points):
            if i not in used_pred:
                records.append(
                    MatchRecord(video_id=video_id, frame_index=frame, class_id=class_id, pred=p, outcome="FP")
                )
        for j, g in enumerate(gt_points):
            if j not in used_gt:
                records.append(
                    MatchRecord(video_id=video_id, frame_index=frame, class_id=class_id, gt=g, outcome="FN")
                )
    return records


def match_all(
    results: Sequence[TrackResult],
    annotations: Sequence[KeypointAnnotation],
    tau: float,
    taxonomy: Optional[ClassTaxonomy] = None,
    num_workers: Optional[int] = None,
) -> List[MatchRecord]:
    """
    Match every annotated frame; frames without predictions count as all-FN.

    Predictions for frames without an annotation are ignored. Results with
    no video id are attributed to the annotations' video when there is only one.

    Raises:
        FormatError: If two results name the same (video, frame)
    """
    videos = sorted({a.video_id for a in annotations})
    by_key: Dict[Tuple[str, int], TrackResult] = {}
    for result in results:
        video_id = result.video_id
        if video_id not in videos and len(videos) == 1:
            video_id = videos[0]
        key = (video_id, result.frame_index)
        if key in by_key:
            raise FormatError(f"duplicate track result for video {key[0]!r}, frame {key[1]}")
        by_key[key] = result
    unmatched = len(set(by_key) - {(a.video_id, a.frame_index) for a in annotations})
    if unmatched:
        logger.debug(f"Ignoring predictions on {unmatched} unannotated frames")

    def match_one(annotation: KeypointAnnotation) -> List[MatchRecord]:
        preds = by_key.get(
            (annotation.video_id, annotation.frame_index),
            TrackResult(video_id=annotation.video_id, frame_index=annotation.frame_index),
        )
        return match_frame(preds, annotation, tau, taxonomy)

    with ThreadPoolExecutor(max_workers=num_workers or config.NUM_WORKERS) as executor:
        per_frame = list(executor.map(match_one, annotations))
    return [record for records in per_frame for record in records]
