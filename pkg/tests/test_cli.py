import json

import pandas as pd
import pytest

from toolsight.localize import read_track_results, write_track_results
from toolsight.main import EXIT_DATA, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from toolsight.models.models import Detection, MetricReport, TrackResult


def ground_truth_results(dataset):
    return [
        TrackResult(
            video_id=a.video_id,
            frame_index=a.frame_index,
            detections=[Detection(class_id=k.class_id, x=k.x, y=k.y) for k in a.keypoints if k.visible],
        )
        for video in dataset.videos
        for a in dataset.annotations(video)
    ]


@pytest.fixture(scope="module")
def sfc_run(tiny_dataset, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("sfc_run")
    code = main(
        [
            "train-sfc",
            "--data",
            str(tiny_dataset.root),
            "--run-dir",
            str(run_dir),
            "--epochs",
            "1",
            "--batch-size",
            "2",
            "--val-fraction",
            "0",
            "--desk-scale",
            "--no-augment",
        ]
    )
    assert code == EXIT_OK
    return run_dir


class TestSynthAndPrepare:
    def test_generate_then_prepare(self, tmp_path, capsys):
        root = tmp_path / "synth"
        assert main(["synth-gen", "-o", str(root), "--clips", "10", "--frames", "20", "--seed", "4"]) == EXIT_OK
        assert "10 clips x 20 frames" in capsys.readouterr().out
        assert main(["prepare", str(root)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "Validated 200 annotated frames in 10 videos" in out
        assert "wrote 200 masks" in out
        assert len(list((root / "videos" / "clip_003" / "masks").glob("*.png"))) == 20

    def test_invalid_scene_option(self, tmp_path, capsys):
        assert main(["synth-gen", "-o", str(tmp_path), "--amplitude", "-1"]) == EXIT_USAGE
        assert capsys.readouterr().err.startswith("error: invalid scene option")

    def test_prepare_missing_directory(self, tmp_path, capsys):
        assert main(["prepare", str(tmp_path / "absent")]) == EXIT_DATA
        assert "dataset directory not found" in capsys.readouterr().err


class TestEval:
    def test_ground_truth_scores_perfectly(self, small_dataset, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        write_track_results(pred, ground_truth_results(small_dataset), small_dataset.taxonomy)
        out = tmp_path / "report.json"
        assert main(["eval", "--pred", str(pred), "--gt", str(small_dataset.root), "-o", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "detection accuracy = 100.00 %" in text
        assert "localization RMSE = 0.00 ± 0.00 px" in text
        report = MetricReport.model_validate_json(out.read_text())
        assert report.tau == pytest.approx(20 * 64 / 576)
        records = pd.read_csv(tmp_path / "report_records.csv")
        assert set(records["outcome"]) == {"TP"}

    def test_single_annotation_file(self, small_dataset, tmp_path, capsys):
        video = small_dataset.videos[0]
        results = [r for r in ground_truth_results(small_dataset) if r.video_id == video]
        pred = tmp_path / "pred.jsonl"
        write_track_results(pred, results, small_dataset.taxonomy)
        gt = small_dataset.annotation_path(video)
        args = ["eval", "--pred", str(pred), "--gt", str(gt), "--tau", "2", "-o", str(tmp_path / "r.json")]
        assert main(args) == EXIT_OK
        assert "tau = 2.00 px" in capsys.readouterr().out

    def test_unknown_class_in_predictions(self, small_dataset, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        pred.write_text('{"video": "clip_000", "frame": 0, "detections": [{"class": "Nope", "x": 1, "y": 1}]}\n')
        code = main(["eval", "--pred", str(pred), "--gt", str(small_dataset.root), "-o", str(tmp_path / "r.json")])
        assert code == EXIT_DATA
        assert "Nope" in capsys.readouterr().err


class TestTrainAndInfer:
    def test_train_sfc_outputs(self, sfc_run):
        resolved = json.loads((sfc_run / "resolved_config.json").read_text())
        assert resolved["train"]["epochs"] == 1
        assert resolved["train"]["sfc_lr"] == pytest.approx(2e-3)
        assert resolved["train"]["augmentation"] is False
        assert (sfc_run / "checkpoints" / "best.mkpt").exists()
        assert (sfc_run / "train_log.csv").exists()

    def test_flags_override_config_file(self, tiny_dataset, tmp_path):
        config_file = tmp_path / "run.json"
        config_file.write_text(json.dumps({"train": {"epochs": 7, "batch_size": 3, "seed": 5}}))
        run_dir = tmp_path / "run"
        args = ["train-sfc", "--config", str(config_file), "--data", str(tiny_dataset.root)]
        args += ["--run-dir", str(run_dir), "--epochs", "1", "--val-fraction", "0", "--no-augment"]
        assert main(args) == EXIT_OK
        resolved = json.loads((run_dir / "resolved_config.json").read_text())["train"]
        assert (resolved["epochs"], resolved["batch_size"], resolved["seed"]) == (1, 3, 5)

    def test_infer_writes_one_line_per_frame(self, tiny_dataset, sfc_run, tmp_path, capsys):
        out = tmp_path / "pred.jsonl"
        ckpt = sfc_run / "checkpoints" / "best.mkpt"
        assert main(["infer", "--ckpt", str(ckpt), "--data", str(tiny_dataset.root), "-o", str(out)]) == EXIT_OK
        assert "Tracked 4 frames" in capsys.readouterr().out
        results = read_track_results(out, tiny_dataset.taxonomy)
        assert [r.frame_index for r in results] == [0, 1, 2, 3]

    def test_train_mfc_and_infer(self, tiny_dataset, sfc_run, tmp_path, capsys):
        run_dir = tmp_path / "mfc"
        args = ["train-mfc", "--data", str(tiny_dataset.root), "--sfc", str(sfc_run / "checkpoints" / "best.mkpt")]
        args += ["--run-dir", str(run_dir), "--epochs", "1", "--batch-size", "2", "--val-fraction", "0"]
        args += ["--K", "2", "--variant", "B", "--depth", "off", "--finetune-lr", "0", "--no-augment"]
        assert main(args) == EXIT_OK
        resolved = json.loads((run_dir / "resolved_config.json").read_text())
        assert resolved["mfc"] == {"K": 2, "use_depth": False, "variant": "B", "num_classes": 11}
        out = tmp_path / "pred.jsonl"
        ckpt = run_dir / "checkpoints" / "best.mkpt"
        args = ["infer", "--ckpt", str(ckpt), "--data", str(tiny_dataset.root), "-o", str(out), "--provider", "static"]
        assert main(args) == EXIT_OK
        assert len(out.read_text().splitlines()) == 4

    def test_render_with_checkpoint(self, tiny_dataset, sfc_run, tmp_path):
        out = tmp_path / "overlays"
        ckpt = sfc_run / "checkpoints" / "best.mkpt"
        assert main(["render", "--data", str(tiny_dataset.root), "--ckpt", str(ckpt), "-o", str(out)]) == EXIT_OK
        assert len(list(out.glob("*.png"))) == 4

    def test_render_ground_truth_only(self, tiny_dataset, tmp_path):
        out = tmp_path / "overlays"
        assert main(["render", "--data", str(tiny_dataset.root), "-o", str(out)]) == EXIT_OK
        assert sorted(p.name for p in out.iterdir())[0] == "000000.png"

    def test_ablate_single_cell(self, tiny_dataset, sfc_run, tmp_path):
        out = tmp_path / "ablation.csv"
        args = ["ablate", "--data", str(tiny_dataset.root), "--test", str(tiny_dataset.root)]
        args += ["--sfc", str(sfc_run / "checkpoints" / "best.mkpt"), "--run-dir", str(tmp_path / "ablate")]
        args += ["--K", "2", "--variants", "w", "--depth", "off", "--epochs", "1", "--val-fraction", "0"]
        args += ["--no-augment", "-o", str(out)]
        assert main(args) == EXIT_OK
        table = pd.read_csv(out)
        assert table[["K", "variant", "depth"]].values.tolist() == [[2, "MFCNet-W", "w/o depth"]]


class TestExitCodes:
    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["infer", "--ckpt", "x.mkpt"])
        assert info.value.code == EXIT_USAGE

    def test_missing_dataset_option(self, capsys):
        assert main(["train-sfc", "--epochs", "1"]) == EXIT_USAGE
        assert "--data is required" in capsys.readouterr().err

    def test_invalid_config_value(self, tiny_dataset, tmp_path, capsys):
        config_file = tmp_path / "run.json"
        config_file.write_text(json.dumps({"train": {"epochs": 0}}))
        code = main(["train-sfc", "--config", str(config_file), "--data", str(tiny_dataset.root)])
        assert code == EXIT_DATA
        assert "train.epochs" in capsys.readouterr().err

    def test_bad_window_list(self, tiny_dataset, sfc_run, tmp_path):
        args = ["ablate", "--data", str(tiny_dataset.root), "--test", str(tiny_dataset.root)]
        args += ["--sfc", str(sfc_run / "checkpoints" / "best.mkpt"), "--run-dir", str(tmp_path), "--K", "2,x"]
        assert main(args) == EXIT_USAGE

    def test_corrupt_checkpoint(self, tiny_dataset, tmp_path, capsys):
        ckpt = tmp_path / "bad.mkpt"
        ckpt.write_bytes(b"not a checkpoint")
        code = main(["infer", "--ckpt", str(ckpt), "--data", str(tiny_dataset.root), "-o", str(tmp_path / "p.jsonl")])
        assert code == EXIT_RUNTIME
        assert "is not a checkpoint" in capsys.readouterr().err
