"""
Deterministic synthetic tool scenes with analytic keypoints, flow and depth.

Each tool is a thick shaft ending in two clasper segments. The shaft
translates rigidly; the claspers additionally rotate about the jaw base.
All textures are functions of part-local coordinates, so the exact motion
of every pixel is known and flow maps are exact.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from toolsight.exceptions import SceneConfigError
from toolsight.models.models import Keypoint, KeypointAnnotation, SceneConfig
from toolsight.tensor import Tensor

logger = logging.getLogger(__name__)

BACKGROUND_PART = 0
SHAFT, RIGHT_CLASPER, LEFT_CLASPER = 0, 1, 2
PARTS_PER_TOOL = 3
MAX_PLACEMENT_ATTEMPTS = 200
BLUR_OFFSETS = (-0.5, -0.25, 0.0)


def _rotate(vector: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * vector[0] - s * vector[1], s * vector[0] + c * vector[1]])


class ValueNoise:
    """Periodic lattice value noise with smoothstep interpolation."""

    def __init__(self, rng: np.random.Generator, spacing: float, cells: int = 32):
        self.values = rng.random((cells, cells))
        self.spacing = spacing
        self.cells = cells

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        gx, gy = x / self.spacing, y / self.spacing
        x0, y0 = np.floor(gx), np.floor(gy)
        fx, fy = gx - x0, gy - y0
        fx, fy = fx * fx * (3 - 2 * fx), fy * fy * (3 - 2 * fy)
        xi = x0.astype(np.int64) % self.cells
        yi = y0.astype(np.int64) % self.cells
        xj, yj = (xi + 1) % self.cells, (yi + 1) % self.cells
        v = self.values
        top = v[yi, xi] * (1 - fx) + v[yi, xj] * fx
        bottom = v[yj, xi] * (1 - fx) + v[yj, xj] * fx
        return top * (1 - fy) + bottom * fy


@dataclass
class ToolRig:
    """Static parameters of one tool and its motion law."""

    side: str
    head0: np.ndarray
    direction: np.ndarray
    shaft_length: float
    clasper_length: float
    shaft_halfwidth: float
    clasper_halfwidth: float
    theta0: float
    clasper_amplitude: float
    clasper_omega: float
    clasper_phase: float
    radius: float = 0.0
    omega: float = 0.0
    phase: np.ndarray = field(default_factory=lambda: np.zeros(2))
    velocity: Optional[np.ndarray] = None

    def head(self, t: float) -> np.ndarray:
        if self.velocity is not None:
            return self.head0 + t * self.velocity
        swing = np.sin(self.omega * t + self.phase) - np.sin(self.phase)
        return self.head0 + self.radius * swing

    def theta(self, t: float) -> float:
        return self.theta0 + self.clasper_amplitude * np.sin(self.clasper_omega * t + self.clasper_phase)

    def clasper_direction(self, t: float, sign: int) -> np.ndarray:
        return _rotate(self.direction, sign * self.theta(t))

    def keypoints(self, t: float) -> Dict[str, np.ndarray]:
        head = self.head(t)
        return {
            "EndPoint": head - self.shaft_length * self.direction,
            "ShaftPoint": head - 0.5 * self.shaft_length * self.direction,
            "HeadPoint": head,
            "RightClasperPoint": head + self.clasper_length * self.clasper_direction(t, +1),
            "LeftClasperPoint": head + self.clasper_length * self.clasper_direction(t, -1),
        }


@dataclass
class RenderedFrame:
    rgb: np.ndarray
    parts: np.ndarray
    depth: np.ndarray


@dataclass
class SyntheticClip:
    """Everything generated for one clip."""

    video_id: str
    frames: List[Tensor]
    annotations: List[KeypointAnnotation]
    flows: Dict[Tuple[int, int], Tensor]
    depths: List[Tensor]
    occupancy: List[np.ndarray]


class SyntheticScene:
    """Renderer of one clip; every quantity is a pure function of (config, seed, t)."""

    def __init__(self, cfg: SceneConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.taxonomy = cfg.taxonomy()
        height, width = cfg.height, cfg.width
        scale = min(height, width)
        texture_rng = np.random.default_rng([cfg.texture_seed, seed])
        self.noise_coarse = ValueNoise(texture_rng, spacing=0.11 * scale)
        self.noise_fine = ValueNoise(texture_rng, spacing=0.04 * scale)
        self.noise_depth = ValueNoise(texture_rng, spacing=0.2 * scale)
        self.drift = np.array(cfg.background_drift if cfg.hard_mode else (0.0, 0.0))
        self.gy, self.gx = np.meshgrid(
            np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij"
        )
        self.tools = self._place_tools(np.random.default_rng(seed))

    # Placement

    def _sample_rig(self, rng: np.random.Generator, side: str) -> ToolRig:
        cfg = self.cfg
        height, width = cfg.height, cfg.width
        scale = min(height, width)
        angle = -rng.uniform(np.pi / 6, np.pi / 3)
        direction = np.array([np.cos(angle), np.sin(angle)])
        head = np.array([rng.uniform(0.3, 0.45) * width, rng.uniform(0.3, 0.55) * height])
        if side == "R":
            direction[0] = -direction[0]
            head[0] = width - 1 - head[0]
        moving = cfg.translation is None and cfg.motion_amplitude > 0
        omega = rng.uniform(0.15, 0.35)
        return ToolRig(
            side=side,
            head0=head,
            direction=direction,
            shaft_length=0.38 * scale,
            clasper_length=0.14 * scale,
            shaft_halfwidth=max(2.5, 0.03 * scale),
            clasper_halfwidth=max(1.5, 0.015 * scale),
            theta0=0.45,
            clasper_amplitude=cfg.clasper_amplitude if moving else 0.0,
            clasper_omega=rng.uniform(0.2, 0.5),
            clasper_phase=rng.uniform(0, 2 * np.pi),
            radius=cfg.motion_amplitude / (omega * np.sqrt(2.0)) if moving else 0.0,
            omega=omega,
            phase=rng.uniform(0, 2 * np.pi, size=2),
            velocity=np.array(cfg.translation, dtype=np.float64) if cfg.translation else None,
        )

    def _placement_problem(self, tools: List[ToolRig]) -> Optional[str]:
        cfg = self.cfg
        margin = cfg.roi_radius
        for t in range(cfg.frames_per_clip):
            points = []
            for tool in tools:
                for name, p in tool.keypoints(t).items():
                    if not (margin <= p[0] <= cfg.width - 1 - margin and margin <= p[1] <= cfg.height - 1 - margin):
                        return f"{tool.side}_{name} leaves the frame at t={t}: ({p[0]:.1f}, {p[1]:.1f})"
                    points.append((tool.side, p))
            for i, (side_a, a) in enumerate(points):
                for side_b, b in points[i + 1 :]:
                    if side_a != side_b and np.hypot(*(a - b)) < 2 * margin + 2:
                        return f"tools collide at t={t}"
        return None

    def _place_tools(self, rng: np.random.Generator) -> List[ToolRig]:
        sides = ["L", "R"][: self.cfg.num_tools]
        problem = None
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            tools = [self._sample_rig(rng, side) for side in sides]
            problem = self._placement_problem(tools)
            if problem is None:
                return tools
        raise SceneConfigError(
            f"cannot keep keypoints {self.cfg.roi_radius} px inside the frame: {problem}",
            detail="Reduce the motion amplitude, translation speed or clip length.",
        )

    # Rendering

    @staticmethod
    def _segment_distance(px, py, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ab = b - a
        t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / float(ab @ ab), 0.0, 1.0)
        return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))

    def _background(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        x = self.gx - self.drift[0] * t
        y = self.gy - self.drift[1] * t
        n = 0.65 * self.noise_coarse(x, y) + 0.35 * self.noise_fine(x, y)
        rgb = np.stack([0.55 + 0.3 * n, 0.22 + 0.15 * n, 0.2 + 0.12 * n])
        depth = 1.0 + 0.15 * self.noise_depth(x, y)
        return rgb, depth

    def render(self, t: float) -> RenderedFrame:
        """Render frame colors, part ids and raw depth at time t."""
        rgb, depth = self._background(t)
        parts = np.zeros(rgb.shape[1:], dtype=np.int64)
        px, py = self.gx, self.gy
        # Right tool first so the left tool is drawn on top
        for index in reversed(range(len(self.tools))):
            tool = self.tools[index]
            head = tool.head(t)
            base_id = 1 + PARTS_PER_TOOL * index
            end = head - tool.shaft_length * tool.direction
            inside = self._segment_distance(px, py, end, head) <= tool.shaft_halfwidth
            along = (px - head[0]) * tool.direction[0] + (py - head[1]) * tool.direction[1]
            across = (px - head[0]) * tool.direction[1] - (py - head[1]) * tool.direction[0]
            shade = 0.62 + 0.12 * np.sin(2 * np.pi * along / 10.0) + 0.08 * (
                1 - np.abs(across) / tool.shaft_halfwidth
            )
            self._paint(rgb, depth, parts, inside, shade, 0.45 - 0.2 * along / tool.shaft_length, base_id + SHAFT)
            for sign, part in ((+1, RIGHT_CLASPER), (-1, LEFT_CLASPER)):
                axis = tool.clasper_direction(t, sign)
                tip = head + tool.clasper_length * axis
                inside = self._segment_distance(px, py, head, tip) <= tool.clasper_halfwidth
                along = (px - head[0]) * axis[0] + (py - head[1]) * axis[1]
                shade = 0.42 + 0.1 * np.sin(2 * np.pi * along / 6.0)
                self._paint(rgb, depth, parts, inside, shade, np.full_like(shade, 0.44), base_id + part)
        return RenderedFrame(rgb=rgb, parts=parts, depth=depth)

    @staticmethod
    def _paint(rgb, depth, parts, inside, shade, part_depth, part_id) -> None:
        shade = np.clip(shade, 0.0, 1.0)
        rgb[0][inside] = shade[inside]
        rgb[1][inside] = shade[inside]
        rgb[2][inside] = np.clip(shade[inside] * 1.04, 0.0, 1.0)
        depth[inside] = part_depth[inside]
        parts[inside] = part_id

    def frame(self, t: int) -> np.ndarray:
        """Frame colors at integer time t, motion-blurred in hard mode."""
        if not self.cfg.hard_mode:
            return self.render(t).rgb.astype(np.float32)
        return np.mean([self.render(t + dt).rgb for dt in BLUR_OFFSETS], axis=0).astype(np.float32)

    def occupancy(self, t: int) -> np.ndarray:
        return self.render(t).parts != BACKGROUND_PART

    def depth(self, t: int) -> np.ndarray:
        """Depth at time t, min-max normalized to [0, 1]."""
        raw = self.render(t).depth
        low, high = raw.min(), raw.max()
        if high - low <= 0:
            return np.zeros((1,) + raw.shape, dtype=np.float32)
        return ((raw - low) / (high - low))[None].astype(np.float32)

    def flow(self, t: int, past: int) -> np.ndarray:
        """Exact displacement from each pixel of frame t to its position in frame ``past``."""
        parts = self.render(t).parts
        px, py = self.gx, self.gy
        past_x = px - self.drift[0] * (t - past)
        past_y = py - self.drift[1] * (t - past)
        for index, tool in enumerate(self.tools):
            base_id = 1 + PARTS_PER_TOOL * index
            head_now, head_then = tool.head(t), tool.head(past)
            shaft = parts == base_id + SHAFT
            past_x[shaft] = px[shaft] + head_then[0] - head_now[0]
            past_y[shaft] = py[shaft] + head_then[1] - head_now[1]
            for sign, part in ((+1, RIGHT_CLASPER), (-1, LEFT_CLASPER)):
                region = parts == base_id + part
                turn = sign * (tool.theta(past) - tool.theta(t))
                c, s = np.cos(turn), np.sin(turn)
                qx, qy = px[region] - head_now[0], py[region] - head_now[1]
                past_x[region] = head_then[0] + c * qx - s * qy
                past_y[region] = head_then[1] + s * qx + c * qy
        return np.stack([past_x - px, past_y - py]).astype(np.float32)

    def annotation(self, t: int, video_id: str) -> KeypointAnnotation:
        keypoints = []
        for tool in self.tools:
            points = tool.keypoints(t)
            if self.cfg.taxonomy_style == "jigsaws":
                named = [
                    (f"{tool.side}_TipPoint", points["RightClasperPoint"]),
                    (f"{tool.side}_TipPoint", points["LeftClasperPoint"]),
                    (f"{tool.side}_JawBasePoint", points["HeadPoint"]),
                ]
            else:
                named = [(f"{tool.side}_{name}", p) for name, p in points.items()]
            for name, p in named:
                keypoints.append(
                    Keypoint(class_id=self.taxonomy.class_id(name), x=float(p[0]), y=float(p[1]))
                )
        keypoints.sort(key=lambda k: k.class_id)
        return KeypointAnnotation(video_id=video_id, frame_index=t, keypoints=keypoints)


def gen_clip(cfg: SceneConfig, seed: int, video_id: str = "clip_000") -> SyntheticClip:
    """
    Generate one clip with frames, annotations, flows and depths.

    Args:
        cfg: Scene configuration
        seed: Clip seed (tool placement, motion phases, texture)
        video_id: Id stamped on the annotations

    Returns:
        SyntheticClip; ``flows[(t, s)]`` is the exact t -> s flow for
        1 <= t - s <= cfg.max_flow_offset

    Raises:
        SceneConfigError: If the motion would push keypoints off the frame
    """
    scene = SyntheticScene(cfg, seed)
    frames, annotations, depths, occupancy = [], [], [], []
    flows: Dict[Tuple[int, int], Tensor] = {}
    for t in range(cfg.frames_per_clip):
        frames.append(Tensor(scene.frame(t)))
        annotations.append(scene.annotation(t, video_id))
        depths.append(Tensor(scene.depth(t)))
        occupancy.append(scene.occupancy(t))
        for offset in range(1, cfg.max_flow_offset + 1):
            if t - offset >= 0:
                flows[(t, t - offset)] = Tensor(scene.flow(t, t - offset))
    logger.debug(f"Generated clip {video_id} with {cfg.frames_per_clip} frames (seed {seed})")
    return SyntheticClip(
        video_id=video_id,
        frames=frames,
        annotations=annotations,
        flows=flows,
        depths=depths,
        occupancy=occupancy,
    )
