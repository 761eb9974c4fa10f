"""End-to-end two-stage inference: propose, plan crops, detect per crop, merge.

Stages are plain callables. A proposer receives the image metadata and an
opaque scene handle (pixels for a real network, ground truth for the
simulated oracles) and returns :class:`~bltnet.pcmad.Proposal` objects. A
crop detector receives one :class:`~bltnet.pcmad.MRoi` plus the scene handle
and returns detections in the crop's own downscaled pixel frame.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence

from .cost_model import CostReport, DetectorProfile, reduction_factor
from .geometry import Box, ImageMeta, iou
from .metrics import Detection, EvalParams, EvalReport, GtBox, evaluate
from .pcmad import CropPlan, MRoi, PcmadParams, Proposal, pcmad


class Proposer(Protocol):
    def __call__(self, image: ImageMeta, scene: Any) -> list[Proposal]: ...


class CropDetector(Protocol):
    def __call__(self, crop: MRoi, scene: Any) -> list[Detection]: ...


class StageError(RuntimeError):
    """A stage failed on a specific image."""

    def __init__(self, image_id: str, cause: BaseException):
        super().__init__(f"image {image_id!r}: {type(cause).__name__}: {cause}")
        self.image_id = image_id
        self.cause = cause


class DatasetError(RuntimeError):
    def __init__(self, failures: dict):
        ids = sorted(failures)
        shown = ", ".join(ids[:10]) + (" ..." if len(ids) > 10 else "")
        super().__init__(f"{len(ids)} image(s) failed: {shown}")
        self.failures = failures


@dataclass(frozen=True)
class PipelineParams:
    pcmad: PcmadParams = field(default_factory=PcmadParams)
    nms_iou: float = 0.5
    eval: EvalParams = field(default_factory=EvalParams)

    def __post_init__(self):
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError("nms_iou must lie in (0, 1)")


@dataclass(frozen=True)
class Sample:
    """One dataset image. ``scene`` defaults to the ground-truth list."""

    image: ImageMeta
    gt: tuple[GtBox, ...] = ()
    scene: Any = None

    @property
    def handle(self) -> Any:
        return self.gt if self.scene is None else self.scene


@dataclass(frozen=True)
class ImageResult:
    plan: CropPlan
    detections: tuple[Detection, ...]
    proposals: tuple[Proposal, ...] = ()


@dataclass(frozen=True)
class DatasetResult:
    eval: EvalReport
    cost: CostReport
    plans: dict
    detections: dict
    proposals: dict
    stage1: str
    stage2: str


def to_crop_frame(box: Box, crop: MRoi) -> Box:
    s = crop.scale
    x0, y0 = crop.box.x_min, crop.box.y_min
    return Box((box.x_min - x0) * s, (box.y_min - y0) * s, (box.x_max - x0) * s, (box.y_max - y0) * s)


def remap_detection(d: Detection, m: MRoi, tol: float = 1e-6) -> Detection:
    """Map a crop-frame detection back to image coordinates."""
    frame = Box(0.0, 0.0, float(m.scaled_width_px), float(m.scaled_height_px))
    if not frame.contains(d.box, tol):
        raise ValueError(f"detection {d.box.as_tuple()} lies outside the {m.scaled_width_px}x{m.scaled_height_px} crop")
    s = m.scale
    x0, y0 = m.box.x_min, m.box.y_min
    b = d.box
    return Detection(Box(b.x_min / s + x0, b.y_min / s + y0, b.x_max / s + x0, b.y_max / s + y0), d.score)


def global_nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy non-maximum suppression.

    Candidates are visited by descending score, then descending area, then
    input order; a candidate is dropped when its IoU with any kept detection
    reaches ``iou_threshold``.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, -dets[i].box.area, i))
    kept: list[Detection] = []
    for i in order:
        if all(iou(dets[i].box, k.box) < iou_threshold for k in kept):
            kept.append(dets[i])
    return kept


def _clip(box: Box, image: ImageMeta) -> Box:
    return Box(
        min(max(box.x_min, 0.0), image.width_px),
        min(max(box.y_min, 0.0), image.height_px),
        min(max(box.x_max, 0.0), image.width_px),
        min(max(box.y_max, 0.0), image.height_px),
    )


def run_image(
    proposer: Proposer,
    detector: CropDetector,
    image: ImageMeta,
    scene: Any,
    params: PipelineParams = PipelineParams(),
) -> ImageResult:
    """Run both stages on one image; any stage exception becomes :class:`StageError`."""
    try:
        proposals = proposer(image, scene)
        plan = pcmad(proposals, image, params.pcmad)
        found: list[Detection] = []
        for crop in plan.mrois:
            for d in detector(crop, scene):
                r = remap_detection(d, crop)
                # ceil-rounded crop sizes can push a remapped edge a hair past the image
                found.append(Detection(_clip(r.box, image), r.score))
        found = [d for d in found if d.box.area > 0]
        return ImageResult(plan, tuple(global_nms(found, params.nms_iou)), tuple(proposals))
    except StageError:
        raise
    except Exception as exc:
        raise StageError(image.image_id, exc) from exc


class _Serialized:
    """Wraps a stage that declares ``single_use = True`` behind a lock."""

    def __init__(self, stage):
        self._stage = stage
        self._lock = threading.Lock()

    def __call__(self, *args):
        with self._lock:
            return self._stage(*args)


def _guard(stage):
    return _Serialized(stage) if getattr(stage, "single_use", False) else stage


def run_dataset(
    proposer: Proposer,
    detector: CropDetector,
    dataset: Sequence[Sample],
    stage1: DetectorProfile,
    stage2: DetectorProfile,
    params: PipelineParams = PipelineParams(),
    max_workers: Optional[int] = None,
) -> DatasetResult:
    """Run every image, then aggregate accuracy and cost.

    Images are processed on a bounded thread pool; results are aggregated in
    image-id order so they depend neither on scheduling nor on input order. The cost
    report uses dataset-average pixel counts.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    ids = [s.image.image_id for s in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in dataset")
    proposer, detector = _guard(proposer), _guard(detector)

    def work(sample: Sample):
        try:
            return run_image(proposer, detector, sample.image, sample.handle, params)
        except StageError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max_workers or 4) as pool:
        outcomes = list(pool.map(work, dataset))
    failures = {s.image.image_id: o for s, o in zip(dataset, outcomes) if isinstance(o, StageError)}
    if failures:
        raise DatasetError(failures)

    # aggregate in image-id order so float sums do not depend on input order
    ranked = sorted(zip(dataset, outcomes), key=lambda t: t[0].image.image_id)
    plans = {s.image.image_id: o.plan for s, o in ranked}
    dets = {s.image.image_id: list(o.detections) for s, o in ranked}
    proposals = {s.image.image_id: list(o.proposals) for s, o in ranked}
    gt = {s.image.image_id: list(s.gt) for s, _ in ranked}
    report = evaluate(gt, plans, dets, params.eval)
    n_avg = sum(s.image.n_pixels for s in dataset) / len(dataset)
    m_avg = sum(p.m_pixels for p in plans.values()) / len(dataset)
    cost = reduction_factor(stage1, stage2, n_avg, m_avg)
    return DatasetResult(report, cost, plans, dets, proposals, stage1.name, stage2.name)
