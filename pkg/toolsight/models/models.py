# These are the serializable records of toolsight.
# They travel through JSON files (taxonomy, annotations, configs, track results, reports).
# Tensor-carrying containers live next to the numeric code instead.

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

BACKGROUND = "background"


class ClassTaxonomy(BaseModel):
    """Ordered keypoint classes; background is always class 0."""

    classes: List[str] = Field(
        ..., min_length=1, description="Keypoint class names, class id = position + 1"
    )
    max_instances: Dict[str, int] = Field(
        default_factory=dict,
        description="Per-class instance cap, classes not listed allow one instance",
    )

    @field_validator("classes")
    @classmethod
    def _unique_names(cls, classes: List[str]) -> List[str]:
        if len(set(classes)) != len(classes):
            raise ValueError("class names must be unique")
        if BACKGROUND in classes:
            raise ValueError(f"'{BACKGROUND}' is reserved for class 0")
        return classes

    @model_validator(mode="after")
    def _known_caps(self) -> "ClassTaxonomy":
        for name, cap in self.max_instances.items():
            if name not in self.classes:
                raise ValueError(f"max_instances names unknown class {name}")
            if cap < 1:
                raise ValueError(f"max_instances for {name} must be at least 1")
        return self

    @classmethod
    def endovis(cls) -> "ClassTaxonomy":
        """Five keypoints per tool on two tools: 11 classes with background."""
        parts = ["EndPoint", "ShaftPoint", "HeadPoint", "RightClasperPoint", "LeftClasperPoint"]
        return cls(classes=[f"{side}_{part}" for side in ("L", "R") for part in parts])

    @classmethod
    def jigsaws(cls) -> "ClassTaxonomy":
        """Shared tip class (up to two blobs) plus jaw base per tool: 5 classes."""
        return cls(
            classes=["L_TipPoint", "L_JawBasePoint", "R_TipPoint", "R_JawBasePoint"],
            max_instances={"L_TipPoint": 2, "R_TipPoint": 2},
        )

    @property
    def num_classes(self) -> int:
        return len(self.classes) + 1

    @property
    def keypoint_class_ids(self) -> List[int]:
        return list(range(1, self.num_classes))

    def class_id(self, name: str) -> int:
        try:
            return self.classes.index(name) + 1
        except ValueError:
            raise KeyError(f"Unknown keypoint class: {name}") from None

    def class_name(self, class_id: int) -> str:
        if class_id == 0:
            return BACKGROUND
        if not 1 <= class_id < self.num_classes:
            raise KeyError(f"Class id {class_id} outside taxonomy of {self.num_classes}")
        return self.classes[class_id - 1]

    def instances(self, class_id: int) -> int:
        return self.max_instances.get(self.class_name(class_id), 1)

    def flip_permutation(self) -> List[int]:
        """Class id mapping under a horizontal flip (L_* <-> R_*)."""
        mapping = list(range(self.num_classes))
        for index, name in enumerate(self.classes, start=1):
            side, _, rest = name.partition("_")
            mirror = {"L": "R", "R": "L"}.get(side)
            if mirror and rest and f"{mirror}_{rest}" in self.classes:
                mapping[index] = self.class_id(f"{mirror}_{rest}")
        return mapping


class Keypoint(BaseModel):
    """A single annotated keypoint."""

    class_id: int = Field(..., ge=1, description="Keypoint class id")
    x: float = Field(..., description="Column in pixels")
    y: float = Field(..., description="Row in pixels")
    visible: bool = Field(True, description="Whether the keypoint is visible")


class KeypointAnnotation(BaseModel):
    """Ground-truth keypoints of one frame."""

    video_id: str = Field(..., description="Video identifier")
    frame_index: int = Field(..., ge=0, description="Frame index within the video")
    keypoints: List[Keypoint] = Field(default_factory=list, description="Keypoints")


class MaskSpec(BaseModel):
    """Keypoint-ROI rasterization settings."""

    radius: float = Field(5.0, gt=0, description="ROI disk radius r_d in pixels")
    taxonomy: ClassTaxonomy = Field(..., description="Class taxonomy")


class SceneConfig(BaseModel):
    """Parameters of the synthetic tool scene generator."""

    height: int = Field(128, ge=32, description="Frame height in pixels")
    width: int = Field(160, ge=32, description="Frame width in pixels")
    num_tools: Literal[1, 2] = Field(2, description="Number of tools in view")
    frames_per_clip: int = Field(20, ge=1, description="Frames per clip")
    motion_amplitude: float = Field(
        2.0, ge=0, description="Maximum tool translation speed in px/frame"
    )
    translation: Optional[Tuple[float, float]] = Field(
        None, description="Constant (vx, vy) px/frame; replaces oscillating motion"
    )
    texture_seed: int = Field(0, description="Seed of the background texture")
    clasper_amplitude: float = Field(
        0.15, ge=0, le=0.3, description="Clasper opening oscillation in radians"
    )
    taxonomy_style: Literal["endovis", "jigsaws"] = Field(
        "endovis", description="Which keypoint taxonomy the generator emits"
    )
    hard_mode: bool = Field(False, description="Enable motion blur and background drift")
    background_drift: Tuple[float, float] = Field(
        (0.75, 0.4), description="Background drift in px/frame when hard_mode is on"
    )
    max_flow_offset: int = Field(3, ge=1, description="Largest t -> t-i flow offset emitted")
    roi_radius: float = Field(5.0, gt=0, description="Margin keypoints keep from the border")

    def taxonomy(self) -> ClassTaxonomy:
        if self.taxonomy_style == "jigsaws":
            return ClassTaxonomy.jigsaws()
        return ClassTaxonomy.endovis()


class DatasetManifest(BaseModel):
    """Description of an on-disk dataset written next to its videos."""

    height: int = Field(..., description="Frame height in pixels")
    width: int = Field(..., description="Frame width in pixels")
    videos: List[str] = Field(default_factory=list, description="Video ids")
    flow_scale: int = Field(1, ge=1, description="Downsample factor of stored flow files")
    max_flow_offset: int = Field(1, ge=1, description="Largest t -> t-i flow stored")
    scene: Optional[SceneConfig] = Field(None, description="Generator config, if synthetic")
    clip_seeds: Dict[str, int] = Field(
        default_factory=dict, description="Per-video generator seeds, if synthetic"
    )


class ProviderConfig(BaseModel):
    """Where optical flow and depth maps come from."""

    mode: Literal["files", "synthetic-oracle", "static"] = Field(
        "files", description="Provider implementation"
    )
    root: Optional[str] = Field(None, description="Dataset root directory")
    downsample_factor: Optional[int] = Field(
        None, ge=1, description="Scale of stored flow files (default: dataset manifest)"
    )


class MfcConfig(BaseModel):
    """Multi-frame context model configuration."""

    K: int = Field(3, ge=2, description="Window length in frames")
    use_depth: bool = Field(True, description="Feed depth maps to MFCNet")
    variant: Literal["B", "W"] = Field("W", description="Concatenation (B) or warp (W) fusion")
    num_classes: int = Field(11, ge=2, description="Segmentation classes incl. background")

    @property
    def input_channels(self) -> int:
        channels = self.K * self.num_classes + (self.K if self.use_depth else 0)
        if self.variant == "B":
            channels += 2 * (self.K - 1)
        return channels


class LrSchedule(BaseModel):
    """Step learning-rate schedule."""

    base_lr: float = Field(..., ge=0, description="Learning rate before the decay epoch")
    decay_gamma: float = Field(0.1, gt=0, description="Multiplicative decay")
    decay_epoch: int = Field(10, ge=0, description="First (0-based) epoch at the decayed rate")

    def lr(self, epoch: int) -> float:
        if epoch < self.decay_epoch:
            return self.base_lr
        return self.base_lr * self.decay_gamma


class TrainConfig(BaseModel):
    """Training hyperparameters."""

    epochs: int = Field(20, ge=1, description="Training epochs")
    batch_size: int = Field(4, ge=1, description="Samples per optimizer step")
    sfc_lr: float = Field(3e-5, gt=0, description="SFC learning rate")
    mfc_finetune_lr: float = Field(
        1e-6, ge=0, description="SFC learning rate while training MFC (0 freezes it)"
    )
    mfcnet_lr: float = Field(1e-4, gt=0, description="MFCNet learning rate")
    decay_gamma: float = Field(0.1, gt=0, description="Learning-rate decay factor")
    decay_epoch: int = Field(10, ge=0, description="Epoch after which rates are decayed")
    seed: int = Field(0, description="Seed for init, shuffling and augmentation")
    augmentation: bool = Field(True, description="Apply data augmentation")
    val_fraction: float = Field(0.1, ge=0, lt=1, description="Share of videos held out")
    background_weight: float = Field(0.01, gt=0, description="NLL weight of background")

    def schedule(self, base_lr: float) -> LrSchedule:
        return LrSchedule(
            base_lr=base_lr, decay_gamma=self.decay_gamma, decay_epoch=self.decay_epoch
        )

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """Rates for from-scratch MiniSeg training on small synthetic sets."""
        values = {"sfc_lr": 2e-3, "mfc_finetune_lr": 2e-5, "mfcnet_lr": 1e-3}
        values.update(overrides)
        return cls(**values)


class Detection(BaseModel):
    """A localized keypoint."""

    class_id: int = Field(..., ge=1, description="Keypoint class id")
    x: float = Field(..., description="Column in pixels")
    y: float = Field(..., description="Row in pixels")
    confidence: float = Field(1.0, description="Mean class probability over the blob")


class TrackResult(BaseModel):
    """Detections of one frame."""

    video_id: str = Field("", description="Video identifier")
    frame_index: int = Field(..., ge=0, description="Frame index")
    detections: List[Detection] = Field(default_factory=list, description="Detections")


class MatchRecord(BaseModel):
    """Outcome of matching one prediction and/or ground-truth keypoint."""

    video_id: str = Field("", description="Video identifier")
    frame_index: int = Field(..., description="Frame index")
    class_id: int = Field(..., description="Keypoint class id")
    gt: Optional[Tuple[float, float]] = Field(None, description="Ground-truth (x, y)")
    pred: Optional[Tuple[float, float]] = Field(None, description="Predicted (x, y)")
    error: Optional[float] = Field(None, description="Euclidean error in pixels")
    outcome: Literal["TP", "FP", "FN"] = Field(..., description="Match outcome")


class ClassMetrics(BaseModel):
    """Detection and localization metrics of one class."""

    class_id: int
    class_name: str
    tp: int
    fp: int
    fn: int
    precision: Optional[float] = Field(None, description="Precision in percent, absent without predictions")
    recall: Optional[float] = Field(None, description="Recall in percent, absent without ground truth")
    accuracy: Optional[float] = Field(None, description="Detection accuracy in percent")
    rmse: Optional[float] = Field(None, description="RMSE over TP matches in pixels")


class MetricReport(BaseModel):
    """Aggregated evaluation results."""

    tau: float = Field(..., description="Match threshold in pixels")
    per_class: List[ClassMetrics] = Field(default_factory=list)
    precision: float = Field(..., description="Mean per-class precision in percent")
    recall: float = Field(..., description="Mean per-class recall in percent")
    accuracy: float = Field(..., description="Pooled detection accuracy in percent")
    rmse_mean: Optional[float] = Field(None, description="Mean of per-class RMSE")
    rmse_std: Optional[float] = Field(None, description="Std of per-class RMSE")
    rmse_pooled: Optional[float] = Field(None, description="RMSE over all TP matches")
    tp: int = 0
    fp: int = 0
    fn: int = 0
    gt_count: int = 0

    def rmse_text(self) -> str:
        if self.rmse_mean is None:
            return "n/a"
        return f"{self.rmse_mean:.2f} ± {self.rmse_std:.2f} px"


class RunConfig(BaseModel):
    """Everything a CLI run needs; file values are overridden by flags."""

    data_dir: Optional[str] = Field(None, description="Training dataset root")
    test_dir: Optional[str] = Field(None, description="Held-out dataset root")
    run_dir: Optional[str] = Field(None, description="Output directory of the run")
    train: TrainConfig = Field(default_factory=TrainConfig)
    mfc: MfcConfig = Field(default_factory=MfcConfig)
    provider: ProviderConfig = Field(default_factory=ProviderConfig)
    mask_radius: Optional[float] = Field(
        None, gt=0, description="Keypoint-ROI radius r_d in pixels (default: generator's, else 5)"
    )
    min_area: int = Field(3, ge=1, description="Smallest blob kept by localization")
    tau: Optional[float] = Field(None, gt=0, description="Match threshold in pixels")
