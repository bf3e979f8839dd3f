"""Track results as JSON lines, one frame per line."""

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from toolsight.exceptions import DataValidationError, TaxonomyMismatchError
from toolsight.models.models import ClassTaxonomy, Detection, TrackResult
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)


class DetectionLine(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    class_name: str = Field(..., alias="class")
    x: float
    y: float
    conf: float = 1.0


class TrackLine(BaseModel):
    """Schema of one JSONL line."""

    video: Optional[str] = Field(None, description="Video id")
    frame: int = Field(..., ge=0, description="Frame index")
    detections: List[DetectionLine] = Field(default_factory=list)


def write_track_results(path: Union[str, Path], results: List[TrackResult], taxonomy: ClassTaxonomy) -> None:
    lines = []
    for result in results:
        line = TrackLine(
            video=result.video_id or None,
            frame=result.frame_index,
            detections=[
                DetectionLine(class_name=taxonomy.class_name(d.class_id), x=d.x, y=d.y, conf=d.confidence)
                for d in result.detections
            ],
        )
        lines.append(json.dumps(line.model_dump(by_alias=True, exclude_none=True)))
    atomic_write(path, ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))
    logger.info(f"Wrote {len(results)} track results to {path}")


def read_track_results(
    path: Union[str, Path], taxonomy: ClassTaxonomy, video_id: str = ""
) -> List[TrackResult]:
    """
    Read a JSONL track file.

    Args:
        path: JSONL file
        taxonomy: Taxonomy the class names must belong to
        video_id: Video id for lines that carry none

    Raises:
        DataValidationError: On malformed lines
        TaxonomyMismatchError: On class names outside the taxonomy
    """
    if not Path(path).exists():
        raise DataValidationError("track file not found", path=str(path))
    results = []
    for number, text in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not text.strip():
            continue
        try:
            line = TrackLine.model_validate_json(text)
        except ValidationError as e:
            raise DataValidationError(
                f"malformed track result on line {number}", path=str(path), detail=str(e)
            ) from e
        detections = []
        for d in line.detections:
            try:
                class_id = taxonomy.class_id(d.class_name)
            except KeyError:
                raise TaxonomyMismatchError(
                    f"line {number}: class '{d.class_name}' is not in the taxonomy", path=str(path)
                ) from None
            detections.append(Detection(class_id=class_id, x=d.x, y=d.y, confidence=d.conf))
        results.append(
            TrackResult(video_id=line.video or video_id, frame_index=line.frame, detections=detections)
        )
    return results
