"""Keypoint annotation and taxonomy JSON ingestion."""

import json
import logging
from collections import Counter
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from toolsight.exceptions import DataValidationError
from toolsight.models.models import ClassTaxonomy, Keypoint, KeypointAnnotation
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class AnnotatedKeypoint(BaseModel):
    """Keypoint as written in an annotation file."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    class_name: str = Field(..., alias="class", description="Keypoint class name")
    x: float = Field(..., description="Column in pixels")
    y: float = Field(..., description="Row in pixels")
    visible: bool = Field(True, description="Whether the keypoint is visible")


class AnnotatedFrame(BaseModel):
    model_config = ConfigDict(extra="forbid")

    index: int = Field(..., ge=0, description="Frame index")
    keypoints: List[AnnotatedKeypoint] = Field(default_factory=list)


class AnnotationFile(BaseModel):
    """Schema of ``annotations/<video>.json``."""

    model_config = ConfigDict(extra="forbid")

    video: str = Field(..., min_length=1, description="Video id")
    width: Optional[int] = Field(None, gt=0, description="Frame width, enables bound checks")
    height: Optional[int] = Field(None, gt=0, description="Frame height, enables bound checks")
    frames: List[AnnotatedFrame] = Field(default_factory=list)


def _field_path(loc) -> str:
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path


def _parse_json(path: PathLike):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DataValidationError(
            f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}", path=str(path)
        ) from e


def _validate(model, payload, path: PathLike):
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        raise DataValidationError(
            first["msg"],
            path=str(path),
            field=_field_path(first["loc"]),
            detail=str(e),
        ) from e


def load_taxonomy(path: PathLike) -> ClassTaxonomy:
    if not Path(path).exists():
        raise DataValidationError("taxonomy file not found", path=str(path))
    return _validate(ClassTaxonomy, _parse_json(path), path)


def save_taxonomy(path: PathLike, taxonomy: ClassTaxonomy) -> None:
    atomic_write(path, (taxonomy.model_dump_json(indent=2) + "\n").encode("utf-8"))


def load_annotations(
    path: PathLike,
    taxonomy: ClassTaxonomy,
    frame_size: Optional[Tuple[int, int]] = None,
) -> List[KeypointAnnotation]:
    """
    Load and validate one video's annotation file.

    Args:
        path: Path to ``<video>.json``
        taxonomy: Class taxonomy the names refer to
        frame_size: (height, width) used for upper bound checks; defaults to the
            file's own ``height``/``width`` keys when present

    Returns:
        Annotations ordered by frame index; invisible keypoints are kept

    Raises:
        DataValidationError: On malformed JSON, schema violations, unknown class
            names, out-of-range coordinates or too many instances of a class
    """
    if not Path(path).exists():
        raise DataValidationError("annotation file not found", path=str(path))
    parsed: AnnotationFile = _validate(AnnotationFile, _parse_json(path), path)
    if frame_size is None and parsed.height and parsed.width:
        frame_size = (parsed.height, parsed.width)

    annotations = []
    seen_frames = set()
    for position, frame in enumerate(parsed.frames):
        if frame.index in seen_frames:
            raise DataValidationError(
                f"frame {frame.index} annotated twice", path=str(path), field=f"frames[{position}]"
            )
        seen_frames.add(frame.index)
        keypoints = []
        for slot, point in enumerate(frame.keypoints):
            where = f"frames[{position}].keypoints[{slot}]"
            try:
                class_id = taxonomy.class_id(point.class_name)
            except KeyError:
                raise DataValidationError(
                    f"frame {frame.index}: unknown class '{point.class_name}'",
                    path=str(path),
                    field=f"{where}.class",
                ) from None
            if point.visible:
                _check_bounds(point, frame.index, frame_size, path, where)
            keypoints.append(
                Keypoint(class_id=class_id, x=point.x, y=point.y, visible=point.visible)
            )
        counts = Counter(k.class_id for k in keypoints if k.visible)
        for class_id, count in counts.items():
            if count > taxonomy.instances(class_id):
                raise DataValidationError(
                    f"frame {frame.index}: {count} instances of class "
                    f"'{taxonomy.class_name(class_id)}', at most {taxonomy.instances(class_id)}",
                    path=str(path),
                    field=f"frames[{position}]",
                )
        annotations.append(
            KeypointAnnotation(video_id=parsed.video, frame_index=frame.index, keypoints=keypoints)
        )

    annotations.sort(key=lambda a: a.frame_index)
    logger.debug(f"Loaded {len(annotations)} annotated frames from {path}")
    return annotations


def _check_bounds(point: AnnotatedKeypoint, index: int, frame_size, path, where: str) -> None:
    height, width = frame_size if frame_size else (float("inf"), float("inf"))
    for axis, value, limit in (("x", point.x, width), ("y", point.y, height)):
        if not 0 <= value < limit:
            raise DataValidationError(
                f"frame {index}, class '{point.class_name}': {axis}={value} outside [0, {limit})",
                path=str(path),
                field=f"{where}.{axis}",
            )


def write_annotations(
    path: PathLike,
    annotations: List[KeypointAnnotation],
    taxonomy: ClassTaxonomy,
    frame_size: Optional[Tuple[int, int]] = None,
) -> None:
    """Write one video's annotations in the canonical JSON schema."""
    videos = {a.video_id for a in annotations}
    if len(videos) > 1:
        raise DataValidationError(f"annotations mix several videos: {sorted(videos)}", path=str(path))
    document = AnnotationFile(
        video=videos.pop() if videos else Path(path).stem,
        height=frame_size[0] if frame_size else None,
        width=frame_size[1] if frame_size else None,
        frames=[
            AnnotatedFrame(
                index=a.frame_index,
                keypoints=[
                    AnnotatedKeypoint(
                        class_name=taxonomy.class_name(k.class_id),
                        x=k.x,
                        y=k.y,
                        visible=k.visible,
                    )
                    for k in a.keypoints
                ],
            )
            for a in sorted(annotations, key=lambda a: a.frame_index)
        ],
    )
    payload = document.model_dump(by_alias=True, exclude_none=True)
    atomic_write(path, (json.dumps(payload, indent=2) + "\n").encode("utf-8"))
