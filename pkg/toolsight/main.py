"""
Main script for running toolsight.

This module provides the command-line interface for:
- Generating synthetic datasets (synth-gen)
- Validating datasets and writing target masks (prepare)
- Training SFC and MFC models (train-sfc, train-mfc)
- Tracking keypoints and scoring them (infer, eval)
- Running the K x variant x depth ablation (ablate)
- Rendering overlays (render)

Exit codes: 0 success, 2 usage, 3 data validation, 4 runtime.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from toolsight import config
from toolsight.dataio.annotations import load_annotations, load_taxonomy
from toolsight.dataio.dataset import KeypointDataset
from toolsight.dataio.masks import rasterize_masks
from toolsight.exceptions import DataValidationError, ToolsightError, UsageError
from toolsight.flowdepth.providers import ProviderFactory
from toolsight.localize.results import read_track_results, write_track_results
from toolsight.metrics.matching import match_all
from toolsight.metrics.report import aggregate, format_report, write_records_csv, write_report
from toolsight.models.models import (
    KeypointAnnotation,
    MaskSpec,
    ProviderConfig,
    RunConfig,
    SceneConfig,
    TrainConfig,
)
from toolsight.networks.checkpoint import load_checkpoint
from toolsight.pipeline.ablation import run_ablation
from toolsight.pipeline.inference import KeypointTracker, infer
from toolsight.pipeline.prepare import prepare_dataset
from toolsight.pipeline.render import render_video
from toolsight.pipeline.trainer import default_mask_radius, train_mfc, train_sfc
from toolsight.synth.dataset import gen_dataset
from toolsight.utils import atomic_write, default_tau

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4
RESOLVED_CONFIG = "resolved_config.json"


def configure_logging(level: str = config.LOG_LEVEL) -> None:
    """Configure the root logger once: stdout plus the configured log file."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if config.LOG_FILE:
        handlers.append(logging.FileHandler(config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


# Config resolution


def load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataValidationError("config file not found", path=path) from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise DataValidationError(first["msg"], path=path, field=field, detail=str(e)) from e


def _set(values: Dict, key: str, value) -> None:
    if value is not None:
        values[key] = value


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then every flag the user actually passed."""
    base = load_run_config(getattr(args, "config", None))
    top = base.model_dump()
    for key, flag in (("data_dir", "data"), ("test_dir", "test"), ("run_dir", "run_dir"), ("min_area", "min_area"), ("tau", "tau"), ("mask_radius", "radius")):
        _set(top, key, getattr(args, flag, None))

    train = top["train"]
    if getattr(args, "desk_scale", False):
        train.update(TrainConfig.desk_scale().model_dump(include={"sfc_lr", "mfc_finetune_lr", "mfcnet_lr"}))
    for key, flag in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("sfc_lr", "lr"),
        ("mfc_finetune_lr", "finetune_lr"),
        ("mfcnet_lr", "mfcnet_lr"),
        ("seed", "seed"),
        ("val_fraction", "val_fraction"),
    ):
        _set(train, key, getattr(args, flag, None))
    if getattr(args, "no_augment", False):
        train["augmentation"] = False

    mfc = top["mfc"]
    _set(mfc, "K", getattr(args, "K", None))
    _set(mfc, "variant", getattr(args, "variant", None))
    if getattr(args, "depth", None) is not None:
        mfc["use_depth"] = args.depth == "on"

    provider = top["provider"]
    _set(provider, "mode", getattr(args, "provider", None))
    _set(provider, "downsample_factor", getattr(args, "flow_scale", None))
    try:
        return RunConfig.model_validate(top)
    except ValidationError as e:
        raise UsageError(f"invalid option: {e.errors()[0]['msg']}", detail=str(e)) from e


def echo_config(run_config: RunConfig, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(run_dir / RESOLVED_CONFIG, (run_config.model_dump_json(indent=2) + "\n").encode("utf-8"))


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config file)")
    return value


def _run_dir(run_config: RunConfig, command: str) -> Path:
    return Path(run_config.run_dir or Path(config.RUNS_DIR) / command)


def _provider(run_config: RunConfig, root):
    return ProviderFactory.create(run_config.provider, root=root)


# Commands


def run_synth_gen(args: argparse.Namespace) -> int:
    values = {
        "height": args.height,
        "width": args.width,
        "num_tools": args.tools,
        "frames_per_clip": args.frames,
        "motion_amplitude": args.amplitude,
        "clasper_amplitude": args.clasper_amplitude,
        "texture_seed": args.texture_seed,
        "taxonomy_style": args.taxonomy,
        "hard_mode": args.hard,
        "max_flow_offset": args.max_flow_offset,
        "roi_radius": args.radius,
    }
    if args.translation:
        values["translation"] = tuple(float(v) for v in args.translation.split(","))
    try:
        scene = SceneConfig(**{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        raise UsageError(f"invalid scene option: {e.errors()[0]['msg']}", detail=str(e)) from e
    dataset = gen_dataset(scene, args.clips, args.seed, args.out, flow_scale=args.flow_scale)
    print(f"Wrote {args.clips} clips x {scene.frames_per_clip} frames to {dataset.root}")
    return EXIT_OK


def run_prepare(args: argparse.Namespace) -> int:
    dataset = KeypointDataset(args.data_dir)
    summary = prepare_dataset(dataset, mask_radius=args.radius or default_mask_radius(dataset))
    print(
        f"Validated {summary.annotated_frames} annotated frames in {summary.videos} videos "
        f"({summary.frames} frames); wrote {summary.masks_written} masks"
    )
    return EXIT_OK


def run_train_sfc(args: argparse.Namespace) -> int:
    run_config = resolve_run_config(args)
    dataset = KeypointDataset(_require(run_config.data_dir, "--data"))
    run_dir = _run_dir(run_config, "train-sfc")
    echo_config(run_config, run_dir)
    training = train_sfc(dataset, run_config.train, run_dir, mask_radius=run_config.mask_radius)
    print(f"Best epoch {training.best_epoch + 1}; checkpoint {training.best_checkpoint_path}")
    return EXIT_OK


def run_train_mfc(args: argparse.Namespace) -> int:
    run_config = resolve_run_config(args)
    dataset = KeypointDataset(_require(run_config.data_dir, "--data"))
    sfc_ckpt = load_checkpoint(args.sfc, taxonomy=dataset.taxonomy)
    mfc_cfg = run_config.mfc.model_copy(update={"num_classes": dataset.taxonomy.num_classes})
    run_config = run_config.model_copy(update={"mfc": mfc_cfg})
    run_dir = _run_dir(run_config, "train-mfc")
    echo_config(run_config, run_dir)
    provider = _provider(run_config, dataset.root)
    training = train_mfc(
        dataset, sfc_ckpt, run_config.train, mfc_cfg, provider, run_dir, mask_radius=run_config.mask_radius
    )
    print(f"Best epoch {training.best_epoch + 1}; checkpoint {training.best_checkpoint_path}")
    return EXIT_OK


def run_infer(args: argparse.Namespace) -> int:
    run_config = resolve_run_config(args)
    dataset = KeypointDataset(_require(run_config.data_dir, "--data"))
    checkpoint = load_checkpoint(args.ckpt, taxonomy=dataset.taxonomy)
    provider = _provider(run_config, dataset.root) if checkpoint.mfc is not None else None
    videos = args.videos.split(",") if args.videos else dataset.videos
    run = infer(checkpoint, {video: dataset.frames(video) for video in videos}, provider, run_config.min_area)
    write_track_results(args.out, run.results, dataset.taxonomy)
    print(
        f"Tracked {len(run.results)} frames at {run.fps:.1f} frames/s "
        f"(throughput depends on the hardware); results in {args.out}"
    )
    return EXIT_OK


def load_ground_truth(path: str, taxonomy_path: Optional[str]):
    """Annotations and taxonomy from a dataset root, an annotation directory or one file."""
    root = Path(path)
    if (root / "annotations").is_dir():
        dataset = KeypointDataset(root)
        annotations = [a for video in dataset.videos for a in dataset.annotations(video)]
        return annotations, dataset.taxonomy, dataset.frame_size
    candidates = [Path(taxonomy_path)] if taxonomy_path else [root / "taxonomy.json", root.parent / "taxonomy.json"]
    if root.is_file():
        candidates.append(root.parent.parent / "taxonomy.json")
    taxonomy_file = next((c for c in candidates if c.exists()), candidates[0])
    taxonomy = load_taxonomy(taxonomy_file)
    files = sorted(root.glob("*.json")) if root.is_dir() else [root]
    files = [f for f in files if f.name != "taxonomy.json"]
    if not files:
        raise DataValidationError("no annotation files found", path=str(root))
    annotations: List[KeypointAnnotation] = []
    frame_size = None
    for file in files:
        annotations.extend(load_annotations(file, taxonomy))
        document = json.loads(file.read_text(encoding="utf-8"))
        if document.get("height") and document.get("width"):
            frame_size = (document["height"], document["width"])
    return annotations, taxonomy, frame_size


def run_eval(args: argparse.Namespace) -> int:
    annotations, taxonomy, frame_size = load_ground_truth(args.gt, args.taxonomy)
    predictions = read_track_results(args.pred, taxonomy)
    tau = args.tau or default_tau(frame_size)
    records = match_all(predictions, annotations, tau, taxonomy)
    report = aggregate(records, taxonomy, tau)
    out = Path(args.out)
    write_report(out, report)
    write_records_csv(args.records or out.with_name(f"{out.stem}_records.csv"), records, taxonomy)
    print(format_report(report))
    return EXIT_OK


def _parse_list(text: str, cast, flag: str) -> List:
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise UsageError(f"cannot parse {flag} '{text}'") from e


def _parse_depth(item: str) -> bool:
    if item not in ("on", "off"):
        raise ValueError(item)
    return item == "on"


def run_ablate(args: argparse.Namespace) -> int:
    run_config = resolve_run_config(args)
    train_set = KeypointDataset(_require(run_config.data_dir, "--data"))
    test_set = KeypointDataset(_require(run_config.test_dir, "--test"))
    sfc_ckpt = load_checkpoint(args.sfc, taxonomy=train_set.taxonomy)
    run_dir = _run_dir(run_config, "ablate")
    echo_config(run_config, run_dir)
    variants = _parse_list(args.variants, str.upper, "--variants")
    if any(v not in ("B", "W") for v in variants):
        raise UsageError(f"unknown variant in '{args.variants}', expected B and/or W")
    table = run_ablation(
        train_set,
        test_set,
        sfc_ckpt,
        run_config.train,
        lambda dataset: ProviderFactory.create(
            run_config.provider.model_copy(update={"root": None}), root=dataset.root
        ),
        Ks=_parse_list(args.ks, int, "--K"),
        variants=variants,
        depths=_parse_list(args.depths, _parse_depth, "--depth"),
        tau=run_config.tau,
        min_area=run_config.min_area,
        run_dir=run_dir,
    )
    out = Path(args.out) if args.out else run_dir / "ablation.csv"
    atomic_write(out, table.to_csv(index=False).encode("utf-8"))
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return EXIT_OK


def run_render(args: argparse.Namespace) -> int:
    dataset = KeypointDataset(args.data)
    taxonomy = dataset.taxonomy
    video = args.video or dataset.videos[0]
    frames = dataset.frames(video)
    annotations = {a.frame_index: a for a in dataset.annotations(video)}
    predictions: Dict[int, object] = {}
    segmaps: List = [None] * len(frames)
    if args.ckpt:
        checkpoint = load_checkpoint(args.ckpt, taxonomy=taxonomy)
        provider = None
        if checkpoint.mfc is not None:
            provider = ProviderFactory.create(ProviderConfig(mode=args.provider), root=dataset.root)
        tracker = KeypointTracker(checkpoint, provider, args.min_area)
        probmaps = tracker.probmaps(frames, video)
        segmaps = [p.data.argmax(axis=0) for p in probmaps]
        predictions = {r.frame_index: r for r in tracker.localize(probmaps, video)}
    else:
        spec = MaskSpec(radius=args.radius or default_mask_radius(dataset), taxonomy=taxonomy)
        height, width = dataset.frame_size
        segmaps = [
            rasterize_masks(annotations[i], spec, height, width) if i in annotations else None
            for i in range(len(frames))
        ]
    if args.pred:
        predictions = {r.frame_index: r for r in read_track_results(args.pred, taxonomy, video) if r.video_id == video}
    render_video(
        args.out,
        frames,
        [predictions.get(i) for i in range(len(frames))],
        [annotations.get(i) for i in range(len(frames))],
        segmaps,
    )
    print(f"Rendered {len(frames)} overlays of {video} to {args.out}")
    return EXIT_OK


# Parser


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="RunConfig JSON file; flags override its values")
    parser.add_argument("--data", help="Training dataset root")
    parser.add_argument("--run-dir", dest="run_dir", help="Output directory (default: $TOOLSIGHT_RUNS_DIR/<command>)")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--batch-size", dest="batch_size", type=int, help="Samples per optimizer step")
    parser.add_argument("--seed", type=int, help="Seed for init, shuffling and augmentation")
    parser.add_argument("--val-fraction", dest="val_fraction", type=float, help="Share of videos held out")
    parser.add_argument("--radius", type=float, help="Keypoint-ROI radius r_d in pixels")
    parser.add_argument("--no-augment", dest="no_augment", action="store_true", help="Disable augmentation")
    parser.add_argument(
        "--desk-scale",
        dest="desk_scale",
        action="store_true",
        help="Use the higher learning rates suited to from-scratch training on small sets",
    )


def _add_mfc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--K", dest="K", type=int, help="Window length in frames")
    parser.add_argument("--variant", choices=["B", "W"], help="MFCNet variant")
    parser.add_argument("--depth", choices=["on", "off"], help="Feed depth maps to MFCNet")
    _add_provider_flags(parser)


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--provider", choices=["files", "synthetic-oracle", "static"], help="Flow/depth source"
    )
    parser.add_argument("--flow-scale", dest="flow_scale", type=int, help="Downsample factor of the flow files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toolsight",
        description="Toolsight - surgical tool keypoint tracking via keypoint-ROI segmentation",
    )
    parser.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    synth = subparsers.add_parser("synth-gen", help="Generate a synthetic dataset")
    synth.add_argument("-o", "--out", required=True, help="Target directory")
    synth.add_argument("--clips", type=int, default=10, help="Number of clips")
    synth.add_argument("--frames", type=int, help="Frames per clip (default 20)")
    synth.add_argument("--seed", type=int, default=0, help="Dataset seed")
    synth.add_argument("--height", type=int, help="Frame height (default 128)")
    synth.add_argument("--width", type=int, help="Frame width (default 160)")
    synth.add_argument("--tools", type=int, choices=[1, 2], help="Tools in view (default 2)")
    synth.add_argument("--amplitude", type=float, help="Maximum tool speed in px/frame (default 2)")
    synth.add_argument("--clasper-amplitude", dest="clasper_amplitude", type=float, help="Clasper oscillation in radians")
    synth.add_argument("--translation", help="Constant tool velocity 'vx,vy' in px/frame")
    synth.add_argument("--texture-seed", dest="texture_seed", type=int, help="Background texture seed")
    synth.add_argument("--taxonomy", choices=["endovis", "jigsaws"], help="Keypoint taxonomy style")
    synth.add_argument("--hard", action="store_true", default=None, help="Motion blur and background drift")
    synth.add_argument("--max-flow-offset", dest="max_flow_offset", type=int, help="Largest t -> t-i flow written")
    synth.add_argument("--flow-scale", dest="flow_scale", type=int, default=1, help="Write flow at 1/f resolution")
    synth.add_argument("--radius", type=float, help="Margin keypoints keep from the border (r_d)")
    synth.set_defaults(handler=run_synth_gen)

    prepare = subparsers.add_parser("prepare", help="Validate a dataset and rasterize target masks")
    prepare.add_argument("data_dir", help="Dataset root")
    prepare.add_argument("--radius", type=float, help="Keypoint-ROI radius r_d (default: generator's or 5)")
    prepare.set_defaults(handler=run_prepare)

    sfc = subparsers.add_parser("train-sfc", help="Train the single-frame MiniSeg model")
    _add_training_flags(sfc)
    sfc.add_argument("--lr", type=float, help="SFC learning rate")
    sfc.set_defaults(handler=run_train_sfc)

    mfc = subparsers.add_parser("train-mfc", help="Train MFCNet on top of an SFC checkpoint")
    _add_training_flags(mfc)
    _add_mfc_flags(mfc)
    mfc.add_argument("--sfc", required=True, help="SFC checkpoint")
    mfc.add_argument("--finetune-lr", dest="finetune_lr", type=float, help="SFC learning rate (0 freezes it)")
    mfc.add_argument("--mfcnet-lr", dest="mfcnet_lr", type=float, help="MFCNet learning rate")
    mfc.set_defaults(handler=run_train_mfc)

    inference = subparsers.add_parser("infer", help="Track keypoints and write JSONL results")
    inference.add_argument("--config", help="RunConfig JSON file")
    inference.add_argument("--ckpt", required=True, help="SFC or MFC checkpoint")
    inference.add_argument("--data", help="Dataset root")
    inference.add_argument("--videos", help="Comma-separated video ids (default: all)")
    inference.add_argument("-o", "--out", required=True, help="Output JSONL file")
    inference.add_argument("--min-area", dest="min_area", type=int, help="Smallest blob kept (default 3)")
    _add_provider_flags(inference)
    inference.set_defaults(handler=run_infer)

    evaluate = subparsers.add_parser("eval", help="Score track results against annotations")
    evaluate.add_argument("--pred", required=True, help="Track results JSONL")
    evaluate.add_argument("--gt", required=True, help="Dataset root, annotation directory or annotation file")
    evaluate.add_argument("--taxonomy", help="taxonomy.json (default: next to the annotations)")
    evaluate.add_argument("--tau", type=float, help="Match threshold in px (default 20 * min(H, W) / 576)")
    evaluate.add_argument("-o", "--out", default="report.json", help="MetricReport JSON")
    evaluate.add_argument("--records", help="Match-record CSV (default: <out>_records.csv)")
    evaluate.set_defaults(handler=run_eval)

    ablate = subparsers.add_parser("ablate", help="Train and score the K x variant x depth matrix")
    _add_training_flags(ablate)
    _add_provider_flags(ablate)
    ablate.add_argument("--test", help="Held-out dataset root")
    ablate.add_argument("--sfc", required=True, help="SFC checkpoint shared by every cell")
    ablate.add_argument("--K", dest="ks", default="2,3,4", help="Window lengths, e.g. 2,3,4")
    ablate.add_argument("--variants", default="B,W", help="Variants, e.g. B,W")
    ablate.add_argument("--depth", dest="depths", default="on,off", help="Depth settings, e.g. on,off")
    ablate.add_argument("--finetune-lr", dest="finetune_lr", type=float, help="SFC learning rate")
    ablate.add_argument("--mfcnet-lr", dest="mfcnet_lr", type=float, help="MFCNet learning rate")
    ablate.add_argument("--tau", type=float, help="Match threshold in px")
    ablate.add_argument("--min-area", dest="min_area", type=int, help="Smallest blob kept")
    ablate.add_argument("-o", "--out", help="Table CSV (default: <run-dir>/ablation.csv)")
    ablate.set_defaults(handler=run_ablate)

    render = subparsers.add_parser("render", help="Write overlay PNGs with GT and predicted crosses")
    render.add_argument("--data", required=True, help="Dataset root")
    render.add_argument("--video", help="Video id (default: first)")
    render.add_argument("--pred", help="Track results JSONL")
    render.add_argument("--ckpt", help="Checkpoint used for predicted masks (and crosses without --pred)")
    render.add_argument("--provider", default="files", choices=["files", "synthetic-oracle", "static"], help="Flow/depth source for MFC checkpoints")
    render.add_argument("--min-area", dest="min_area", type=int, default=3, help="Smallest blob kept")
    render.add_argument("--radius", type=float, help="ROI radius of ground-truth masks")
    render.add_argument("-o", "--out", required=True, help="Output directory")
    render.set_defaults(handler=run_render)
    return parser


def report_error(error: Exception, code: int) -> int:
    message = error.message if isinstance(error, ToolsightError) else f"{type(error).__name__}: {error}"
    print(f"error: {message}", file=sys.stderr)
    detail = getattr(error, "detail", None)
    if detail:
        for line in str(detail).splitlines():
            print(f"  {line}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for the application.

    Parses command line arguments and runs the appropriate command.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or config.LOG_LEVEL)
    try:
        return args.handler(args)
    except DataValidationError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return report_error(e, EXIT_DATA)
    except UsageError as e:
        return report_error(e, EXIT_USAGE)
    except ToolsightError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return report_error(e, EXIT_RUNTIME)
    except Exception as e:
        logger.exception(f"{args.command} failed")
        return report_error(e, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
