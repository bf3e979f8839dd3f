"""SFC and MFC training loops."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from toolsight.dataio.augment import AugmentParams, augment
from toolsight.dataio.dataset import KeypointDataset
from toolsight.dataio.masks import rasterize_masks
from toolsight.dataio.windows import ClipWindow, build_window
from toolsight.exceptions import (
    DataValidationError,
    NumericalError,
    ShapeError,
    TaxonomyMismatchError,
    TrainingDivergedError,
)
from toolsight.flowdepth.providers import FlowDepthProvider
from toolsight.models.models import MaskSpec, MfcConfig, TrainConfig
from toolsight.networks.checkpoint import Checkpoint, save_checkpoint
from toolsight.networks.losses import LossTerms, composite_loss, mean_terms
from toolsight.networks.mfcnet import MfcNetParams, mfc_forward
from toolsight.networks.miniseg import MiniSegParams, sfc_forward_any
from toolsight.pipeline.batching import BatchLoader
from toolsight.tensor import Adam, ParamGroup, Tensor, backward, no_grad
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)

SampleKey = Tuple[str, int]
LOG_FILE = "train_log.csv"
BEST_CHECKPOINT = "best.mkpt"


@dataclass
class EpochRecord:
    epoch: int
    lrs: Dict[str, float]
    H: float
    J: float
    total: float
    val_total: float
    wall_seconds: float

    def row(self) -> Dict[str, float]:
        row = {"epoch": self.epoch}
        row.update({f"lr_{name}": lr for name, lr in self.lrs.items()})
        row.update({k: v for k, v in asdict(self).items() if k not in ("epoch", "lrs")})
        return row


@dataclass
class TrainingRun:
    """Outcome of one training phase."""

    checkpoint: Checkpoint
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    run_dir: Optional[Path] = None

    @property
    def best_checkpoint_path(self) -> Optional[Path]:
        return self.run_dir / "checkpoints" / BEST_CHECKPOINT if self.run_dir else None

    def losses(self) -> List[float]:
        return [record.total for record in self.history]


@dataclass
class SfcSample:
    frame: Tensor
    target: np.ndarray


def annotated_keys(dataset: KeypointDataset, videos: Sequence[str]) -> List[SampleKey]:
    return [(video, a.frame_index) for video in videos for a in dataset.annotations(video)]


def default_mask_radius(dataset: KeypointDataset) -> float:
    manifest = dataset.manifest
    return manifest.scene.roi_radius if manifest and manifest.scene else 5.0


def _annotation(dataset: KeypointDataset, key: SampleKey):
    video, index = key
    for annotation in dataset.annotations(video):
        if annotation.frame_index == index:
            return annotation
    raise DataValidationError(f"frame {index} of {video} is not annotated")


def _split(dataset: KeypointDataset, cfg: TrainConfig) -> Tuple[List[SampleKey], List[SampleKey]]:
    train_videos, val_videos = dataset.split(cfg.val_fraction, cfg.seed)
    train_keys = annotated_keys(dataset, train_videos)
    if not train_keys:
        raise DataValidationError("no annotated frames to train on", path=str(dataset.root))
    logger.info(
        f"Training on {len(train_keys)} frames of {len(train_videos)} videos, "
        f"validating on {len(val_videos)} videos"
    )
    return train_keys, annotated_keys(dataset, val_videos)


def _fit(
    name: str,
    optimizer: Adam,
    train_keys: List[SampleKey],
    val_keys: List[SampleKey],
    make_sample: Callable,
    sample_loss: Callable[[object], LossTerms],
    cfg: TrainConfig,
    snapshot: Callable[[], Checkpoint],
    run_dir: Optional[Path],
) -> TrainingRun:
    loader = BatchLoader(train_keys, make_sample, cfg.batch_size, cfg.seed)
    history: List[EpochRecord] = []
    best_loss, best_epoch, best = math.inf, 0, None
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        lrs = optimizer.learning_rates(epoch)
        sums = {"H": 0.0, "J": 0.0, "total": 0.0}
        seen = 0
        for batch_index, batch in enumerate(loader.epoch(epoch)):
            optimizer.zero_grad()
            try:
                terms = mean_terms([sample_loss(sample) for sample in batch])
                values = terms.values()
                backward(terms.total)
            except NumericalError as e:
                raise TrainingDivergedError(epoch, batch_index, e.message, float("nan")) from e
            for term, value in values.items():
                if not np.isfinite(value):
                    raise TrainingDivergedError(epoch, batch_index, term, value)
            optimizer.step(epoch)
            for term in sums:
                sums[term] += values[term] * len(batch)
            seen += len(batch)
            logger.debug(f"{name} epoch {epoch} batch {batch_index}: total {values['total']:.4f}")

        val_total = _validate(val_keys, make_sample, sample_loss) if val_keys else float("nan")
        record = EpochRecord(
            epoch=epoch,
            lrs=lrs,
            H=sums["H"] / seen,
            J=sums["J"] / seen,
            total=sums["total"] / seen,
            val_total=val_total,
            wall_seconds=time.perf_counter() - started,
        )
        history.append(record)
        logger.info(
            f"{name} epoch {epoch + 1}/{cfg.epochs}: H={record.H:.4f} J={record.J:.4f} "
            f"total={record.total:.4f} val={record.val_total:.4f} ({record.wall_seconds:.1f}s)"
        )

        selection = val_total if val_keys else record.total
        checkpoint = snapshot()
        checkpoint.meta.update({"epoch": epoch, "phase": name})
        if selection < best_loss:
            best_loss, best_epoch, best = selection, epoch, checkpoint
        if run_dir is not None:
            _write_epoch(run_dir, checkpoint, epoch, history, best is checkpoint)
    return TrainingRun(checkpoint=best, history=history, best_epoch=best_epoch, run_dir=run_dir)


def _validate(keys: List[SampleKey], make_sample: Callable, sample_loss: Callable) -> float:
    totals = []
    with no_grad():
        for key in keys:
            totals.append(sample_loss(make_sample(key, None)).total.item())
    return float(np.mean(totals))


def _write_epoch(run_dir: Path, checkpoint: Checkpoint, epoch: int, history, is_best: bool) -> None:
    checkpoints = run_dir / "checkpoints"
    save_checkpoint(checkpoints / f"epoch_{epoch + 1:03d}.mkpt", checkpoint)
    if is_best:
        save_checkpoint(checkpoints / BEST_CHECKPOINT, checkpoint)
    log = pd.DataFrame([record.row() for record in history])
    atomic_write(run_dir / LOG_FILE, log.to_csv(index=False).encode("utf-8"))


def _copy_sfc(sfc: MiniSegParams) -> MiniSegParams:
    copy = MiniSegParams.init(sfc.num_classes)
    copy.load_named(sfc.named_tensors())
    return copy


def train_sfc(
    dataset: KeypointDataset,
    cfg: TrainConfig,
    run_dir: Optional[Union[str, Path]] = None,
    mask_radius: Optional[float] = None,
) -> TrainingRun:
    """
    Train MiniSeg on single annotated frames.

    Args:
        dataset: Training dataset; a seeded share of its videos is held out
        cfg: Hyperparameters
        run_dir: Where checkpoints and ``train_log.csv`` go (nothing is written when None)
        mask_radius: ROI radius of the targets (default: the generator's, else 5 px)

    Returns:
        TrainingRun whose checkpoint has the lowest validation loss

    Raises:
        TrainingDivergedError: If a loss term stops being finite
    """
    taxonomy = dataset.taxonomy
    spec = MaskSpec(radius=mask_radius or default_mask_radius(dataset), taxonomy=taxonomy)
    train_keys, val_keys = _split(dataset, cfg)
    sfc = MiniSegParams.init(taxonomy.num_classes, seed=cfg.seed)
    optimizer = Adam([ParamGroup("sfc", sfc.parameters(), cfg.schedule(cfg.sfc_lr))])
    height, width = dataset.frame_size

    def make_sample(key: SampleKey, seed: Optional[int]) -> SfcSample:
        annotation = _annotation(dataset, key)
        frame = dataset.frames(key[0])[key[1]]
        target = rasterize_masks(annotation, spec, height, width)
        if seed is None or not cfg.augmentation:
            return SfcSample(frame=frame, target=target)
        augmented = augment(frame, target, seed=seed, taxonomy=taxonomy)
        return SfcSample(frame=Tensor(augmented.frame), target=augmented.segmap)

    def sample_loss(sample: SfcSample) -> LossTerms:
        return composite_loss(sfc_forward_any(sfc, sample.frame), sample.target, cfg.background_weight)

    def snapshot() -> Checkpoint:
        return Checkpoint(taxonomy=taxonomy, sfc=_copy_sfc(sfc), meta={"seed": cfg.seed})

    run_path = Path(run_dir) if run_dir is not None else None
    return _fit("sfc", optimizer, train_keys, val_keys, make_sample, sample_loss, cfg, snapshot, run_path)


def train_mfc(
    dataset: KeypointDataset,
    sfc_ckpt: Checkpoint,
    cfg: TrainConfig,
    mfc_cfg: MfcConfig,
    provider: FlowDepthProvider,
    run_dir: Optional[Union[str, Path]] = None,
    mask_radius: Optional[float] = None,
) -> TrainingRun:
    """
    Train MFCNet on K-frame windows while finetuning the SFC model.

    SFC weights train at ``mfc_finetune_lr`` and MFCNet weights at
    ``mfcnet_lr``, both on the same step schedule. A zero finetune rate
    freezes the SFC model.

    Args:
        dataset: Training dataset
        sfc_ckpt: Pretrained SFC checkpoint; it is not modified
        cfg: Hyperparameters
        mfc_cfg: Window length, variant and depth usage
        provider: Flow/depth source for the dataset's videos
        run_dir: Where checkpoints and the training log go
        mask_radius: ROI radius of the targets

    Returns:
        TrainingRun whose checkpoint holds both networks

    Raises:
        TaxonomyMismatchError: If the SFC checkpoint was trained on another taxonomy
        ProviderError: If the provider cannot serve windows of length K
    """
    taxonomy = dataset.taxonomy
    if sfc_ckpt.taxonomy != taxonomy:
        raise TaxonomyMismatchError(
            "SFC checkpoint taxonomy differs from the dataset's",
            path=str(dataset.root),
            detail=f"checkpoint: {sfc_ckpt.taxonomy.classes}\ndataset: {taxonomy.classes}",
        )
    if mfc_cfg.num_classes != taxonomy.num_classes:
        raise ShapeError(
            f"MFC config has {mfc_cfg.num_classes} classes, taxonomy has {taxonomy.num_classes}"
        )
    provider.check_window(mfc_cfg.K)
    spec = MaskSpec(radius=mask_radius or default_mask_radius(dataset), taxonomy=taxonomy)
    train_keys, val_keys = _split(dataset, cfg)
    sfc = _copy_sfc(sfc_ckpt.sfc)
    net = MfcNetParams.init(mfc_cfg, seed=cfg.seed)
    optimizer = Adam(
        [
            ParamGroup("sfc", sfc.parameters(), cfg.schedule(cfg.mfc_finetune_lr)),
            ParamGroup("mfcnet", net.parameters(), cfg.schedule(cfg.mfcnet_lr)),
        ]
    )
    finetune = cfg.mfc_finetune_lr > 0
    height, width = dataset.frame_size

    def make_sample(key: SampleKey, seed: Optional[int]) -> ClipWindow:
        window = build_window(dataset.frames(key[0]), _annotation(dataset, key), mfc_cfg.K, spec, provider)
        if seed is None or not cfg.augmentation:
            return window
        return window.augmented(AugmentParams.draw(seed, height, width), taxonomy)

    def sample_loss(window: ClipWindow) -> LossTerms:
        probs = mfc_forward(sfc, net, window, mfc_cfg, train_sfc=finetune)
        return composite_loss(probs, window.target, cfg.background_weight)

    def snapshot() -> Checkpoint:
        copy = MfcNetParams.init(mfc_cfg)
        copy.load_named(net.named_tensors())
        return Checkpoint(taxonomy=taxonomy, sfc=_copy_sfc(sfc), mfc=copy, meta={"seed": cfg.seed})

    run_path = Path(run_dir) if run_dir is not None else None
    return _fit("mfc", optimizer, train_keys, val_keys, make_sample, sample_loss, cfg, snapshot, run_path)
