"""Synthetic street scenes and noisy oracle stages.

Scenes are a pure function of ``(config, image_index)``: every image draws
from its own generator seeded with ``[seed, index]``, so corpora can be
generated in any order or in parallel. Oracle stages seed per image id (and
per crop) the same way.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Box, ImageMeta, intersect
from .metrics import Detection, GtBox
from .pcmad import MRoi, Proposal
from .pipeline import Sample, to_crop_frame


@dataclass(frozen=True)
class SceneConfig:
    """Synthetic scene distribution.

    Heights are log-normal with median ``exp(height_mu)`` px. The defaults
    put roughly 70% of objects below 100 px. A fraction ``cluster_fraction``
    of objects is placed beside an earlier object of similar height, offset
    horizontally by ``|N(0, cluster_spread)|`` object widths.
    """

    width_px: int = 2048
    height_px: int = 1024
    objects_lambda: float = 9.0
    height_mu: float = math.log(70.0)
    height_sigma: float = 0.7
    min_height_px: float = 20.0
    aspect_ratio: float = 0.41
    cluster_fraction: float = 0.3
    cluster_spread: float = 1.2
    ignore_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("objects_lambda", "height_sigma", "aspect_ratio", "cluster_spread", "min_height_px"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")
        if not math.isfinite(self.height_mu):
            raise ValueError("height_mu must be finite")
        if not 0.0 <= self.cluster_fraction <= 1.0 or not 0.0 <= self.ignore_fraction <= 1.0:
            raise ValueError("fractions must lie in [0, 1]")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image size must be positive")


@dataclass(frozen=True)
class OracleConfig:
    """Error model of a simulated stage.

    Jitter sigmas are relative: the center moves by ``N(0, sigma * height)``
    px and the size is multiplied by ``exp(N(0, height_jitter_sigma))``.
    ``fp_rate`` is the Poisson mean of spurious outputs per image (proposer)
    or per crop (detector). Proposer false alarms take their heights from the
    scene distribution unless ``fp_height_median_px`` / ``fp_height_sigma``
    are set.
    """

    miss_prob: float = 0.0
    center_jitter_sigma: float = 0.0
    height_jitter_sigma: float = 0.0
    fp_rate: float = 0.0
    min_detectable_height_px: float = 0.0
    min_visible_fraction: float = 0.85
    tp_score_range: tuple[float, float] = (0.6, 1.0)
    fp_score_range: tuple[float, float] = (0.3, 0.9)
    fp_height_median_px: Optional[float] = None
    fp_height_sigma: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob must lie in [0, 1]")
        for name in ("center_jitter_sigma", "height_jitter_sigma", "fp_rate", "min_detectable_height_px"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "tp_score_range", tuple(float(v) for v in self.tp_score_range))
        object.__setattr__(self, "fp_score_range", tuple(float(v) for v in self.fp_score_range))


@dataclass(frozen=True)
class Scene:
    image: ImageMeta
    gt: tuple[GtBox, ...]

    def as_sample(self) -> Sample:
        return Sample(self.image, self.gt, self)


def _place(rng: np.random.Generator, cfg: SceneConfig, h: float, w: float) -> tuple[float, float]:
    x0 = rng.uniform(0.0, cfg.width_px - w)
    y0 = rng.uniform(0.0, cfg.height_px - h)
    return x0, y0


def generate_scene(cfg: SceneConfig, image_index: int) -> Scene:
    rng = np.random.default_rng([cfg.seed, image_index])
    image = ImageMeta(f"sim-{cfg.seed}-{image_index:05d}", cfg.width_px, cfg.height_px)
    n = int(rng.poisson(cfg.objects_lambda))
    max_h = 0.9 * cfg.height_px
    boxes: list[Box] = []
    for _ in range(n):
        if boxes and rng.random() < cfg.cluster_fraction:
            anchor = boxes[int(rng.integers(len(boxes)))]
            h = float(np.clip(anchor.height * math.exp(rng.normal(0.0, 0.08)), cfg.min_height_px, max_h))
            w = min(h * cfg.aspect_ratio, cfg.width_px)
            gap = abs(rng.normal(0.0, cfg.cluster_spread)) * anchor.width
            side = 1.0 if rng.random() < 0.5 else -1.0
            cx = anchor.center_x + side * gap
            x0 = float(np.clip(cx - w / 2, 0.0, cfg.width_px - w))
            # pedestrians stand on a shared ground line
            y0 = float(np.clip(anchor.y_max - h + rng.normal(0.0, 0.05 * h), 0.0, cfg.height_px - h))
        else:
            h = float(np.clip(math.exp(rng.normal(cfg.height_mu, cfg.height_sigma)), cfg.min_height_px, max_h))
            w = min(h * cfg.aspect_ratio, cfg.width_px)
            x0, y0 = _place(rng, cfg, h, w)
        boxes.append(_rounded(Box(x0, y0, x0 + w, y0 + h)))
    ignore = rng.random(len(boxes)) < cfg.ignore_fraction
    gt = tuple(GtBox(b, bool(ig)) for b, ig in zip(boxes, ignore))
    return Scene(image, gt)


def _rounded(b: Box) -> Box:
    # annotation precision; keeps exported corpora compact
    return Box(*(round(v, 2) for v in b.as_tuple()))


def generate_corpus(cfg: SceneConfig, n_images: int) -> list[Scene]:
    return [generate_scene(cfg, i) for i in range(n_images)]


def _stream(seed: int, *parts) -> np.random.Generator:
    key = [seed] + [zlib.crc32(str(p).encode()) for p in parts]
    return np.random.default_rng(key)


def _jitter(rng: np.random.Generator, box: Box, cfg: OracleConfig) -> Box:
    dh, dx, dy = rng.normal(0.0, 1.0, size=3)
    h = box.height * math.exp(cfg.height_jitter_sigma * dh)
    w = box.width * h / box.height
    cx = box.center_x + cfg.center_jitter_sigma * box.height * dx
    cy = box.center_y + cfg.center_jitter_sigma * box.height * dy
    if h == box.height and cx == box.center_x and cy == box.center_y:
        return box
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _random_box(rng: np.random.Generator, frame: Box, height: float, aspect: float) -> Box:
    h = min(height, frame.height)
    w = min(h * aspect, frame.width)
    x0 = rng.uniform(frame.x_min, frame.x_max - w)
    y0 = rng.uniform(frame.y_min, frame.y_max - h)
    return Box(x0, y0, x0 + w, y0 + h)


class OracleProposer:
    """First stage driven by ground truth.

    Every object is dropped with ``miss_prob`` (or when shorter than
    ``min_detectable_height_px``); survivors become jittered proposals.
    Poisson-many background proposals are added with pedestrian-like shape
    and heights drawn from ``scene_cfg``.
    """

    def __init__(self, cfg: OracleConfig, scene_cfg: SceneConfig = SceneConfig()):
        self.cfg = cfg
        self.scene_cfg = scene_cfg

    def __call__(self, image: ImageMeta, scene: Scene) -> list[Proposal]:
        cfg = self.cfg
        rng = _stream(cfg.seed, "proposer", image.image_id)
        bounds = image.bounds
        out: list[Proposal] = []
        lo, hi = cfg.tp_score_range
        for g in scene.gt:
            # draw every variate so the stream stays aligned when knobs change
            missed = rng.random() < cfg.miss_prob
            box = _jitter(rng, g.box, cfg)
            score = float(rng.uniform(lo, hi))
            if missed or g.height_px < cfg.min_detectable_height_px:
                continue
            box = intersect(_rounded(box), bounds)
            if box is None or box.area <= 0:
                continue
            out.append(Proposal(len(out), box, round(score, 4)))
        flo, fhi = cfg.fp_score_range
        sc = self.scene_cfg
        mu = sc.height_mu if cfg.fp_height_median_px is None else math.log(cfg.fp_height_median_px)
        sigma = sc.height_sigma if cfg.fp_height_sigma is None else cfg.fp_height_sigma
        for _ in range(int(rng.poisson(cfg.fp_rate))):
            h = float(np.clip(math.exp(rng.normal(mu, sigma)), sc.min_height_px, 0.9 * image.height_px))
            box = _rounded(_random_box(rng, bounds, h, sc.aspect_ratio))
            out.append(Proposal(len(out), box, round(float(rng.uniform(flo, fhi)), 4)))
        return out


class OracleDetector:
    """Second stage driven by ground truth.

    Inside a crop, an object is found when at least ``min_visible_fraction``
    of it lies in the crop, its downscaled height reaches
    ``min_detectable_height_px`` and it survives ``miss_prob``. The emitted
    box is the visible part, jittered, in crop pixels.
    """

    def __init__(self, cfg: OracleConfig, aspect_ratio: float = 0.41):
        self.cfg = cfg
        self.aspect_ratio = aspect_ratio

    def __call__(self, crop: MRoi, scene: Scene) -> list[Detection]:
        cfg = self.cfg
        rng = _stream(cfg.seed, "detector", scene.image.image_id, min(crop.member_ids))
        frame = Box(0.0, 0.0, float(crop.scaled_width_px), float(crop.scaled_height_px))
        out: list[Detection] = []
        lo, hi = cfg.tp_score_range
        for gi, g in enumerate(scene.gt):
            visible = intersect(g.box, crop.box)
            if visible is None or visible.area <= 0:
                continue
            missed = rng.random() < cfg.miss_prob
            box = _jitter(rng, visible, cfg)
            # same object, same score in every crop: NMS ties then favor the larger box
            score = float(_stream(cfg.seed, "score", scene.image.image_id, gi).uniform(lo, hi))
            if missed or visible.area / g.box.area < cfg.min_visible_fraction:
                continue
            if g.height_px * crop.scale < cfg.min_detectable_height_px:
                continue
            local = intersect(to_crop_frame(box, crop), frame)
            if local is None or local.area <= 0:
                continue
            out.append(Detection(local, score))
        flo, fhi = cfg.fp_score_range
        for _ in range(int(rng.poisson(cfg.fp_rate))):
            h = float(rng.uniform(0.1, 0.6)) * frame.height
            out.append(Detection(_random_box(rng, frame, h, self.aspect_ratio), float(rng.uniform(flo, fhi))))
        return out


def noiseless() -> OracleConfig:
    return OracleConfig()


def scenes_to_samples(scenes: Sequence[Scene]) -> list[Sample]:
    return [s.as_sample() for s in scenes]
