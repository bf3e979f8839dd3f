"""Shared fixtures: finite-difference checks and small synthetic datasets."""

import os
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np
import pytest

from toolsight import config
from toolsight.models.models import ClassTaxonomy, Keypoint, KeypointAnnotation, SceneConfig, TrainConfig
from toolsight.synth.dataset import gen_dataset
from toolsight.tensor import Tensor, backward, default_dtype, no_grad

RUN_SLOW = os.getenv("TOOLSIGHT_RUN_SLOW") == "1"

SMALL_SCENE = SceneConfig(height=64, width=80, frames_per_clip=8, motion_amplitude=1.0)
TINY_SCENE = SceneConfig(height=48, width=64, num_tools=1, frames_per_clip=4, motion_amplitude=1.0)


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set TOOLSIGHT_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def check_gradients(
    build_loss: Callable[..., Tensor],
    arrays: Sequence[np.ndarray],
    h: float = 1e-3,
    rtol: float = 1e-3,
    samples: Optional[int] = None,
    seed: int = 0,
    skip: Optional[Callable[[int, tuple], bool]] = None,
) -> List[float]:
    """
    Compare backward() against central differences in float64.

    Args:
        build_loss: Maps input tensors to a scalar loss
        arrays: Input values; every input requires gradients
        h: Finite-difference step
        rtol: Allowed relative error where either gradient exceeds 1e-4
        samples: Coordinates checked per input (all when None)
        seed: Seed of the coordinate sampling
        skip: Predicate (input index, coordinate) for coordinates to leave out

    Returns:
        The relative errors that were checked
    """
    rng = np.random.default_rng(seed)
    checked = []
    with default_dtype(np.float64):
        tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        backward(build_loss(*tensors))
        analytic = [t.grad.copy() for t in tensors]
        for index, tensor in enumerate(tensors):
            coords = list(np.ndindex(tensor.shape))
            if samples is not None and samples < len(coords):
                coords = [coords[i] for i in rng.choice(len(coords), size=samples, replace=False)]
            for coord in coords:
                if skip is not None and skip(index, coord):
                    continue
                original = tensor.data[coord]
                with no_grad():
                    tensor.data[coord] = original + h
                    plus = build_loss(*tensors).item()
                    tensor.data[coord] = original - h
                    minus = build_loss(*tensors).item()
                tensor.data[coord] = original
                numeric = (plus - minus) / (2 * h)
                expected = analytic[index][coord]
                scale = max(abs(numeric), abs(expected))
                if scale <= 1e-4:
                    assert abs(numeric - expected) < 1e-6
                    continue
                error = abs(numeric - expected) / scale
                assert error < rtol, f"input {index} at {coord}: analytic {expected}, numeric {numeric}"
                checked.append(error)
    return checked


def random_arrays(
    count: int, leading: Sequence[int] = (), seed: int = 0, max_side: int = 17
) -> Iterator[np.ndarray]:
    """
    Random float32 arrays of shape leading + (H, W) for format round-trips.

    The first array is 1x1; the rest mix square and non-square sizes with
    magnitudes from 1e-6 to 1e6 and both signs.
    """
    rng = np.random.default_rng(seed)
    for i in range(count):
        height, width = (1, 1) if i == 0 else rng.integers(1, max_side + 1, size=2)
        scale = 10.0 ** rng.uniform(-6, 6)
        yield (rng.normal(size=(*leading, height, width)) * scale).astype(np.float32)


def make_annotation(points, video_id: str = "v", frame_index: int = 0) -> KeypointAnnotation:
    """Annotation from (class_id, x, y[, visible]) tuples."""
    keypoints = [
        Keypoint(class_id=p[0], x=p[1], y=p[2], visible=p[3] if len(p) > 3 else True) for p in points
    ]
    return KeypointAnnotation(video_id=video_id, frame_index=frame_index, keypoints=keypoints)


@pytest.fixture
def endovis() -> ClassTaxonomy:
    return ClassTaxonomy.endovis()


@pytest.fixture
def jigsaws() -> ClassTaxonomy:
    return ClassTaxonomy.jigsaws()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def few_workers(monkeypatch):
    monkeypatch.setattr(config, "NUM_WORKERS", 2)
    monkeypatch.setattr(config, "LOG_FILE", "")


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Two 8-frame clips, two tools, 64x80."""
    return gen_dataset(SMALL_SCENE, 2, seed=3, root=tmp_path_factory.mktemp("small"))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """One 4-frame clip, one tool, 48x64."""
    return gen_dataset(TINY_SCENE, 1, seed=5, root=tmp_path_factory.mktemp("tiny"))


@pytest.fixture
def quick_train() -> TrainConfig:
    return TrainConfig.desk_scale(epochs=2, batch_size=2, augmentation=False, val_fraction=0.0)
