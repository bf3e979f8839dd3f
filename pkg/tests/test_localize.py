from collections import deque

import numpy as np
import pytest

from tests.conftest import make_annotation
from toolsight.dataio import rasterize_masks
from toolsight.exceptions import DataValidationError, TaxonomyMismatchError
from toolsight.localize import connected_components, extract_keypoints, read_track_results, write_track_results
from toolsight.models.models import Detection, MaskSpec, TrackResult
from toolsight.tensor import Tensor


def flood_fill_labels(mask, connectivity):
    """Reference labeling by breadth-first search."""
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    height, width = mask.shape
    labels = np.zeros(mask.shape, dtype=int)
    count = 0
    for y in range(height):
        for x in range(width):
            if not mask[y, x] or labels[y, x]:
                continue
            count += 1
            labels[y, x] = count
            queue = deque([(y, x)])
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < height and 0 <= nx < width and mask[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = count
                        queue.append((ny, nx))
    return labels, count


def spread_points(rng, count, height, width, margin, spacing):
    points = []
    while len(points) < count:
        candidate = rng.uniform([margin, margin], [width - 1 - margin, height - 1 - margin])
        if all(np.hypot(*(candidate - p)) >= spacing for p in points):
            points.append(candidate)
    return points


class TestConnectedComponents:
    def test_empty_mask(self):
        assert connected_components(np.zeros((5, 5), dtype=bool)) == []

    def test_diagonal_pixels(self):
        mask = np.eye(4, dtype=bool)
        assert len(connected_components(mask)) == 1
        assert len(connected_components(mask, connectivity=4)) == 4

    def test_u_shape_merges(self):
        mask = np.array(
            [
                [1, 0, 1],
                [1, 0, 1],
                [1, 1, 1],
            ],
            dtype=bool,
        )
        (blob,) = connected_components(mask, connectivity=4)
        assert blob.area == 7

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_flood_fill(self, rng, connectivity):
        for _ in range(5):
            mask = rng.random((32, 32)) < 0.45
            blobs = connected_components(mask, connectivity=connectivity)
            labels, count = flood_fill_labels(mask, connectivity)
            assert len(blobs) == count
            covered = np.zeros(mask.shape, dtype=int)
            for blob in blobs:
                rows, cols = blob.pixels[:, 0], blob.pixels[:, 1]
                assert len(np.unique(labels[rows, cols])) == 1
                assert blob.area == np.count_nonzero(labels == labels[rows[0], cols[0]])
                covered[rows, cols] += 1
            np.testing.assert_array_equal(covered, mask.astype(int))

    def test_blobs_in_row_major_order(self, rng):
        blobs = connected_components(rng.random((20, 20)) < 0.3)
        firsts = [b.first_index for b in blobs]
        assert firsts == sorted(firsts)

    def test_invalid_connectivity(self):
        with pytest.raises(ValueError):
            connected_components(np.zeros((2, 2)), connectivity=6)


class TestExtractKeypoints:
    def test_disk_centroid(self, endovis):
        segmap = rasterize_masks(make_annotation([(1, 60, 40)]), MaskSpec(radius=5, taxonomy=endovis), 100, 120)
        (detection,) = extract_keypoints(segmap, endovis).detections
        assert detection.class_id == 1
        assert (detection.x, detection.y) == pytest.approx((60.0, 40.0), abs=1e-9)

    def test_larger_blobs_first_up_to_instance_cap(self, jigsaws):
        tip = jigsaws.class_id("L_TipPoint")
        segmap = np.zeros((40, 60), dtype=np.int64)
        segmap[2:5, 2:6] = tip
        segmap[10:15, 30:36] = tip
        segmap[30:32, 50:53] = tip
        result = extract_keypoints(segmap, jigsaws)
        assert [(d.x, d.y) for d in result.detections] == [(32.5, 12.0), (3.5, 3.0)]

    def test_single_instance_keeps_largest(self, endovis):
        segmap = np.zeros((20, 20), dtype=np.int64)
        segmap[1:3, 1:3] = 4
        segmap[10:14, 10:14] = 4
        (detection,) = extract_keypoints(segmap, endovis).detections
        assert (detection.x, detection.y) == (11.5, 11.5)

    def test_small_blobs_are_dropped(self, endovis):
        segmap = np.zeros((10, 10), dtype=np.int64)
        segmap[4, 4:6] = 2
        assert extract_keypoints(segmap, endovis, min_area=3).detections == []
        assert len(extract_keypoints(segmap, endovis, min_area=2).detections) == 1

    def test_probmap_argmax_and_confidence(self, endovis):
        probs = np.full((11, 10, 10), 0.01)
        probs[0] = 0.9
        probs[0, 3:6, 3:6] = 0.1
        probs[7, 3:6, 3:6] = 0.8
        result = extract_keypoints(Tensor(probs), endovis, frame_index=4, video_id="v")
        (detection,) = result.detections
        assert (result.video_id, result.frame_index) == ("v", 4)
        assert detection.class_id == 7
        assert detection.confidence == pytest.approx(0.8, rel=1e-5)

    def test_translation_equivariance(self, endovis, rng):
        segmap = np.zeros((40, 40), dtype=np.int64)
        segmap[5:12, 6:10] = 3
        segmap[20:23, 15:30] = 9
        shifted = np.roll(segmap, (7, 4), axis=(0, 1))
        before = extract_keypoints(segmap, endovis).detections
        after = extract_keypoints(shifted, endovis).detections
        for a, b in zip(before, after):
            assert (b.x - a.x, b.y - a.y) == pytest.approx((4.0, 7.0))

    def test_rasterized_keypoints_are_recovered(self, endovis, rng):
        spec = MaskSpec(radius=5, taxonomy=endovis)
        for _ in range(500):
            points = spread_points(rng, 10, 96, 128, margin=6, spacing=12)
            ann = make_annotation([(c + 1, p[0], p[1]) for c, p in enumerate(points)])
            detections = extract_keypoints(rasterize_masks(ann, spec, 96, 128), endovis).detections
            assert [d.class_id for d in detections] == list(range(1, 11))
            for detection, point in zip(detections, points):
                assert np.hypot(detection.x - point[0], detection.y - point[1]) <= 0.51


class TestTrackResults:
    def test_round_trip(self, tmp_path, endovis):
        results = [
            TrackResult(video_id="v", frame_index=0, detections=[Detection(class_id=2, x=1.5, y=2.25, confidence=0.75)]),
            TrackResult(video_id="v", frame_index=1),
        ]
        write_track_results(tmp_path / "pred.jsonl", results, endovis)
        lines = (tmp_path / "pred.jsonl").read_text().splitlines()
        assert len(lines) == 2
        assert '"class": "L_ShaftPoint"' in lines[0]
        assert read_track_results(tmp_path / "pred.jsonl", endovis) == results

    def test_missing_video_id_uses_default(self, tmp_path, endovis):
        (tmp_path / "pred.jsonl").write_text('{"frame": 3, "detections": []}\n\n')
        (result,) = read_track_results(tmp_path / "pred.jsonl", endovis, video_id="clip")
        assert (result.video_id, result.frame_index) == ("clip", 3)

    def test_unknown_class(self, tmp_path, endovis):
        (tmp_path / "pred.jsonl").write_text('{"frame": 0, "detections": [{"class": "Tip", "x": 1, "y": 1}]}\n')
        with pytest.raises(TaxonomyMismatchError, match="Tip"):
            read_track_results(tmp_path / "pred.jsonl", endovis)

    def test_malformed_line(self, tmp_path, endovis):
        (tmp_path / "pred.jsonl").write_text('{"frame": 0}\n{"frame": -1}\n')
        with pytest.raises(DataValidationError, match="line 2"):
            read_track_results(tmp_path / "pred.jsonl", endovis)

    def test_missing_file(self, tmp_path, endovis):
        with pytest.raises(DataValidationError, match="not found"):
            read_track_results(tmp_path / "absent.jsonl", endovis)
