import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from toolsight.dataio import save_taxonomy, write_pfm
from toolsight.exceptions import ProviderError, ShapeError, UsageError
from toolsight.flowdepth import (
    FileProvider,
    FlowDepthProvider,
    ProviderFactory,
    StaticSceneProvider,
    SyntheticOracleProvider,
    downsample_flow,
    normalize_depth,
    upscale_flow,
)
from toolsight.models.models import ProviderConfig, SceneConfig
from toolsight.synth.dataset import gen_dataset
from toolsight.synth.scene import SyntheticScene
from toolsight.tensor import Tensor


class RecordingProvider(FlowDepthProvider):
    """Answers with maps that encode the requested indices."""

    def __init__(self):
        self.flow_calls, self.depth_calls = [], []

    def frame_size(self, video_id):
        return (4, 5)

    def flow(self, video_id, current, past):
        self.flow_calls.append((current, past))
        return Tensor(np.full((2, 4, 5), float(current - past)))

    def depth(self, video_id, index):
        self.depth_calls.append(index)
        depth = np.zeros((1, 4, 5))
        depth[0, 0, 0] = index + 1
        return Tensor(depth)


class TestWindowRequests:
    def test_flows_for_three_frame_window(self):
        provider = RecordingProvider()
        flows = provider.get_flows("v", 10, 3)
        assert provider.flow_calls == [(10, 9), (10, 8)]
        assert [f.data[0, 0, 0] for f in flows] == [1.0, 2.0]

    def test_first_frame_has_zero_flows(self):
        provider = RecordingProvider()
        flows = provider.get_flows("v", 0, 3)
        assert provider.flow_calls == []
        assert len(flows) == 2
        assert all(f.shape == (2, 4, 5) and not f.data.any() for f in flows)

    def test_clamped_past_reuses_first_frame(self):
        provider = RecordingProvider()
        provider.get_flows("v", 1, 4)
        assert provider.flow_calls == [(1, 0), (1, 0), (1, 0)]

    def test_depths_run_past_to_current(self):
        provider = RecordingProvider()
        depths = provider.get_depths("v", 10, 3)
        assert provider.depth_calls == [8, 9, 10]
        assert all(d.data.max() == 1.0 and d.data.min() == 0.0 for d in depths)

    def test_negative_frame_index(self):
        with pytest.raises(UsageError):
            RecordingProvider().get_flows("v", -1, 3)
        with pytest.raises(UsageError):
            RecordingProvider().get_depths("v", -1, 3)

    def test_window_of_one(self):
        with pytest.raises(ShapeError):
            StaticSceneProvider(4, 5).get_flows("v", 3, 1)


class TestRescale:
    def test_factor_one_is_identity(self, rng):
        flow = rng.normal(size=(2, 6, 8)).astype(np.float32)
        np.testing.assert_array_equal(upscale_flow(flow, 1).data, flow)

    def test_constant_flow_scales_with_factor(self):
        out = upscale_flow(np.full((2, 4, 5), 3.0), 2)
        assert out.shape == (2, 8, 10)
        np.testing.assert_allclose(out.data, 6.0, rtol=1e-6)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            upscale_flow(np.zeros((2, 4, 5)), 2, target_size=(8, 11))

    def test_invalid_factor(self):
        with pytest.raises(ShapeError):
            upscale_flow(np.zeros((2, 4, 5)), 0)

    def test_downsample_needs_divisible_size(self):
        with pytest.raises(ShapeError):
            downsample_flow(np.zeros((2, 9, 8)), 2)

    def test_round_trip_on_smooth_regions(self):
        cfg = SceneConfig(height=64, width=80, num_tools=1, frames_per_clip=4, translation=(1.5, -0.5))
        flow = SyntheticScene(cfg, seed=3).flow(3, 1)
        restored = upscale_flow(downsample_flow(flow, 2), 2).data
        spread = sliding_window_view(np.pad(flow, ((0, 0), (4, 4), (4, 4)), mode="edge"), (9, 9), axis=(1, 2))
        smooth = ((spread.max(axis=(3, 4)) - spread.min(axis=(3, 4))) < 1e-3).all(axis=0)
        assert smooth.mean() > 0.5
        assert np.abs(restored - flow)[:, smooth].mean() < 0.1

    def test_constant_depth_normalizes_to_zero(self):
        out = normalize_depth(np.full((1, 3, 4), 2.5))
        assert not out.data.any()

    def test_depth_spans_unit_range(self, rng):
        out = normalize_depth(rng.uniform(3, 9, size=(1, 5, 6)))
        assert out.data.min() == 0.0 and out.data.max() == pytest.approx(1.0)


class TestFileProvider:
    def test_reads_window(self, small_dataset):
        provider = FileProvider(small_dataset)
        video = small_dataset.videos[0]
        flows = provider.get_flows(video, 5, 3)
        depths = provider.get_depths(video, 5, 3)
        assert [f.shape for f in flows] == [(2, 64, 80)] * 2
        assert [d.shape for d in depths] == [(1, 64, 80)] * 3

    def test_matches_oracle(self, small_dataset):
        files = FileProvider(small_dataset)
        oracle = SyntheticOracleProvider.from_dataset(small_dataset)
        video = small_dataset.videos[1]
        for a, b in zip(files.get_flows(video, 6, 4), oracle.get_flows(video, 6, 4)):
            np.testing.assert_allclose(a.data, b.data, atol=1e-5)
        for a, b in zip(files.get_depths(video, 6, 4), oracle.get_depths(video, 6, 4)):
            np.testing.assert_allclose(a.data, b.data, atol=1e-5)

    def test_window_longer_than_stored_flows(self, small_dataset):
        with pytest.raises(ProviderError, match="dataset stores up to t-3"):
            FileProvider(small_dataset).get_flows(small_dataset.videos[0], 6, 5)

    def test_missing_flow_names_path(self, tiny_dataset):
        provider = FileProvider(tiny_dataset)
        video = tiny_dataset.videos[0]
        missing = tiny_dataset.flow_path(video, 7, 6)
        with pytest.raises(ProviderError) as info:
            provider.flow(video, 7, 6)
        assert str(missing) in str(info.value)

    def test_depth_size_is_checked(self, tiny_dataset):
        provider = FileProvider(tiny_dataset)
        video = tiny_dataset.videos[0]
        path = tiny_dataset.depth_path(video, 2)
        original = path.read_bytes()
        try:
            write_pfm(path, np.zeros((1, 10, 10)))
            with pytest.raises(ShapeError):
                provider.depth(video, 2)
        finally:
            path.write_bytes(original)

    def test_downsampled_flow_files(self, tmp_path):
        cfg = SceneConfig(height=48, width=64, num_tools=1, frames_per_clip=3, translation=(2.0, 0.0))
        dataset = gen_dataset(cfg, 1, seed=1, root=tmp_path, flow_scale=2)
        provider = FileProvider(dataset)
        assert provider.downsample_factor == 2
        video = dataset.videos[0]
        (flow,) = provider.get_flows(video, 2, 2)
        assert flow.shape == (2, 48, 64)
        exact = SyntheticOracleProvider.from_dataset(dataset).flow(video, 2, 1).data
        assert np.abs(flow.data - exact).mean() < 0.1


class TestOracleProvider:
    def test_translation_flow_is_exact(self, tmp_path):
        cfg = SceneConfig(height=64, width=80, num_tools=1, frames_per_clip=4, translation=(2.0, 0.0))
        dataset = gen_dataset(cfg, 1, seed=2, root=tmp_path)
        video = dataset.videos[0]
        oracle = SyntheticOracleProvider.from_dataset(dataset)
        scene = SyntheticScene(cfg, dataset.manifest.clip_seeds[video])
        occupied = scene.occupancy(3)
        flows = oracle.get_flows(video, 3, 3)
        np.testing.assert_allclose(flows[0].data[0][occupied], -2.0, atol=1e-4)
        np.testing.assert_allclose(flows[1].data[0][occupied], -4.0, atol=1e-4)

    def test_unknown_video(self, small_dataset):
        with pytest.raises(ProviderError, match="no generator seed"):
            SyntheticOracleProvider.from_dataset(small_dataset).flow("clip_999", 2, 1)

    def test_needs_generator_config(self, tmp_path, endovis):
        save_taxonomy(tmp_path / "taxonomy.json", endovis)
        with pytest.raises(ProviderError, match="generator config"):
            SyntheticOracleProvider.from_dataset(tmp_path)


class TestProviderFactory:
    def test_modes(self, small_dataset):
        root = small_dataset.root
        assert isinstance(ProviderFactory.create(ProviderConfig(mode="files"), root=root), FileProvider)
        assert isinstance(
            ProviderFactory.create(ProviderConfig(mode="synthetic-oracle"), root=root), SyntheticOracleProvider
        )
        static = ProviderFactory.create(ProviderConfig(mode="static"), root=root)
        assert isinstance(static, StaticSceneProvider)
        assert static.frame_size("any") == (64, 80)

    def test_config_root_wins(self, small_dataset, tmp_path):
        provider = ProviderFactory.create(ProviderConfig(root=str(small_dataset.root)), root=tmp_path)
        assert provider.dataset.root == small_dataset.root

    def test_downsample_override(self, small_dataset):
        provider = ProviderFactory.create(ProviderConfig(downsample_factor=1), root=small_dataset.root)
        assert provider.downsample_factor == 1

    def test_needs_a_root(self):
        with pytest.raises(ProviderError):
            ProviderFactory.create(ProviderConfig(mode="files"))
