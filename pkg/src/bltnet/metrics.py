"""First-stage quality metrics and log-average miss rate.

Miss rate follows the usual pedestrian-benchmark protocol: detections are
greedily matched to ground truth in descending score order, the score
threshold is swept to trace miss rate against false positives per image
(FPPI), and the miss rates at nine log-spaced FPPI points in [1e-2, 1] are
averaged in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .geometry import Box, intersect, iou, union_area
from .pcmad import CropPlan

MISS_RATE_FLOOR = 1e-4

# Occlusion-fraction bands of the optional bare / partial / heavy subsets.
OCCLUSION_BANDS = {"bare": (0.0, 0.1), "partial": (0.1, 0.35), "heavy": (0.35, 0.8)}


@dataclass(frozen=True)
class GtBox:
    box: Box
    ignore: bool = False
    occlusion: Optional[float] = None

    def __post_init__(self):
        if self.box.height <= 0:
            raise ValueError("ground-truth box must have positive height")

    @property
    def height_px(self) -> float:
        return self.box.height


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float

    def __post_init__(self):
        if self.box.area <= 0:
            raise ValueError("detection must have positive area")


def _log_fppi_points() -> tuple[float, ...]:
    return tuple(float(x) for x in np.logspace(-2.0, 0.0, 9))


@dataclass(frozen=True)
class EvalParams:
    k: float = 0.85
    match_iou: float = 0.5
    fppi_points: tuple[float, ...] = field(default_factory=_log_fppi_points)
    reasonable_min_height_px: float = 50.0
    small_large_split_px: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.k <= 1.0:
            raise ValueError("k must lie in (0, 1]")
        pts = tuple(float(x) for x in self.fppi_points)
        if not pts or pts[0] <= 0 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("fppi_points must be positive and strictly increasing")
        object.__setattr__(self, "fppi_points", pts)


@dataclass(frozen=True)
class SensitivityResult:
    overall: float
    small: float
    large: float
    n_objects: int
    n_small: int
    n_large: int


@dataclass(frozen=True)
class Matching:
    """Outcome of matching one image's detections.

    ``matches`` pairs detection indices with ground-truth indices. Detection
    indices refer to the input order.
    """

    matches: tuple[tuple[int, int], ...]
    false_positives: tuple[int, ...]
    neutral: tuple[int, ...]
    missed: tuple[int, ...]

    @property
    def n_tp(self) -> int:
        return len(self.matches)

    @property
    def n_fp(self) -> int:
        return len(self.false_positives)


@dataclass(frozen=True)
class EvalReport:
    sensitivity: float
    sensitivity_small: float
    sensitivity_large: float
    avg_m_over_n: float
    max_m_over_n: float
    mroi_per_object: float
    mr2: Optional[float]
    mr2_by_class: dict
    n_images: int
    n_objects: int


def coverage_fraction(gt: Box, crops: Sequence[Box]) -> float:
    """Share of ``gt``'s area inside the union of ``crops``."""
    pieces = [c for c in (intersect(gt, m) for m in crops) if c is not None]
    return union_area(pieces) / gt.area


def _require_plans(gt: Mapping[str, Sequence[GtBox]], plans: Mapping[str, CropPlan]):
    missing = sorted(i for i, boxes in gt.items() if i not in plans and any(not g.ignore for g in boxes))
    if missing:
        raise KeyError(f"no crop plan for images with ground truth: {', '.join(missing[:10])}")


def sensitivity(
    gt: Mapping[str, Sequence[GtBox]],
    plans: Mapping[str, CropPlan],
    params: EvalParams = EvalParams(),
) -> SensitivityResult:
    """Fraction of non-ignore objects with at least ``k`` of their area inside crops.

    Objects shorter than ``small_large_split_px`` count as small.
    """
    _require_plans(gt, plans)
    covered = {"small": 0, "large": 0}
    total = {"small": 0, "large": 0}
    for image_id, boxes in gt.items():
        crops = [m.box for m in plans[image_id].mrois] if image_id in plans else []
        for g in boxes:
            if g.ignore:
                continue
            cls = "small" if g.height_px < params.small_large_split_px else "large"
            total[cls] += 1
            if crops and coverage_fraction(g.box, crops) >= params.k:
                covered[cls] += 1

    def ratio(num, den):
        return num / den if den else math.nan

    n = total["small"] + total["large"]
    return SensitivityResult(
        overall=ratio(covered["small"] + covered["large"], n),
        small=ratio(covered["small"], total["small"]),
        large=ratio(covered["large"], total["large"]),
        n_objects=n,
        n_small=total["small"],
        n_large=total["large"],
    )


def relative_processed_area(plans: Sequence[CropPlan]) -> tuple[float, float]:
    """Mean and max of per-image ``M / N``."""
    plans = list(plans)
    if not plans:
        raise ValueError("relative_processed_area needs at least one image")
    values = [p.m_over_n for p in plans]
    return float(np.mean(values)), max(values)


def mroi_per_object(plans: Sequence[CropPlan], gt: Mapping[str, Sequence[GtBox]]) -> float:
    n_gt = sum(1 for boxes in gt.values() for g in boxes if not g.ignore)
    if n_gt == 0:
        raise ValueError("mroi_per_object needs at least one non-ignore ground-truth box")
    return sum(len(p.mrois) for p in plans) / n_gt


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GtBox], params: EvalParams = EvalParams()
) -> Matching:
    """Greedy score-ordered matching of one image.

    Each detection, highest score first (input order on ties), claims the
    still-unmatched non-ignore ground truth with the highest IoU at or above
    ``match_iou``. A detection that claims nothing but overlaps an ignore
    region by that much is neutral; anything else is a false positive.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    matches, fps, neutral = [], [], []
    for di in order:
        best, best_iou = -1, 0.0
        for gi, g in enumerate(gts):
            if g.ignore or taken[gi]:
                continue
            o = iou(dets[di].box, g.box)
            if o >= params.match_iou and (best < 0 or o > best_iou):
                best, best_iou = gi, o
        if best >= 0:
            taken[best] = True
            matches.append((di, best))
        elif any(g.ignore and iou(dets[di].box, g.box) >= params.match_iou for g in gts):
            neutral.append(di)
        else:
            fps.append(di)
    missed = tuple(gi for gi, g in enumerate(gts) if not g.ignore and not taken[gi])
    return Matching(tuple(matches), tuple(fps), tuple(neutral), missed)


def miss_rate_curve(
    dets: Mapping[str, Sequence[Detection]],
    gt: Mapping[str, Sequence[GtBox]],
    params: EvalParams = EvalParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """FPPI and miss rate at every distinct score threshold.

    The first point is the empty threshold (nothing kept): FPPI 0, miss rate
    1. Greedy matching in score order means the match of the top-``t``
    detections is a prefix of the full match, so one pass suffices.
    """
    image_ids = sorted(set(gt) | set(dets))
    n_images = len(image_ids)
    if n_images == 0:
        raise ValueError("no images to evaluate")
    n_gt = sum(1 for i in image_ids for g in gt.get(i, ()) if not g.ignore)
    if n_gt == 0:
        raise ValueError("miss rate is undefined without non-ignore ground truth")

    scores, is_tp, is_fp = [], [], []
    for image_id in image_ids:
        d = list(dets.get(image_id, ()))
        m = match_detections(d, list(gt.get(image_id, ())), params)
        tp = {di for di, _ in m.matches}
        fp = set(m.false_positives)
        for i, det in enumerate(d):
            scores.append(det.score)
            is_tp.append(i in tp)
            is_fp.append(i in fp)
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp_cum = np.cumsum(np.asarray(is_tp, dtype=int)[order])
    fp_cum = np.cumsum(np.asarray(is_fp, dtype=int)[order])
    # keep the last index of each run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True)) if len(s) else np.array([], dtype=int)
    fppi = np.concatenate([[0.0], fp_cum[last] / n_images])
    miss = np.concatenate([[1.0], 1.0 - tp_cum[last] / n_gt])
    return fppi, miss


def log_average_miss_rate(fppi: np.ndarray, miss: np.ndarray, points: Sequence[float]) -> float:
    """Geometric mean of the lowest miss rate reachable at each FPPI point.

    Sampled miss rates are floored at 1e-4 before the log; a curve whose
    samples are all exactly zero reports 0.
    """
    samples = []
    for ref in points:
        ok = fppi <= ref
        samples.append(float(miss[ok].min()))
    if all(v == 0.0 for v in samples):
        return 0.0
    logs = [math.log(max(v, MISS_RATE_FLOOR)) for v in samples]
    return math.exp(sum(logs) / len(logs))


def mr2(
    dets: Mapping[str, Sequence[Detection]],
    gt: Mapping[str, Sequence[GtBox]],
    params: EvalParams = EvalParams(),
    subset: Optional[Callable[[GtBox], bool]] = None,
) -> float:
    """Log-average miss rate over ``params.fppi_points``, as a fraction.

    ``subset`` restricts which ground truth counts; objects outside it are
    treated like ignore regions so detections on them are neither hits nor
    false positives.
    """
    if subset is not None:
        gt = {
            i: [g if (g.ignore or subset(g)) else GtBox(g.box, True, g.occlusion) for g in boxes]
            for i, boxes in gt.items()
        }
    fppi, miss = miss_rate_curve(dets, gt, params)
    return log_average_miss_rate(fppi, miss, params.fppi_points)


def height_subsets(params: EvalParams, gt: Mapping[str, Sequence[GtBox]]) -> dict[str, Callable[[GtBox], bool]]:
    """Named ground-truth filters; occlusion bands only when annotated."""
    lo = params.reasonable_min_height_px
    split = params.small_large_split_px
    out: dict[str, Callable[[GtBox], bool]] = {
        "reasonable": lambda g: g.height_px >= lo and (g.occlusion is None or g.occlusion <= 0.35),
        "small": lambda g: lo <= g.height_px < split,
        "large": lambda g: g.height_px >= split,
    }
    if any(g.occlusion is not None for boxes in gt.values() for g in boxes):
        for name, (a, b) in OCCLUSION_BANDS.items():
            out[name] = (
                lambda g, a=a, b=b: g.height_px >= lo
                and g.occlusion is not None
                and (a < g.occlusion <= b if a > 0 else g.occlusion <= b)
            )
    return out


def evaluate(
    gt: Mapping[str, Sequence[GtBox]],
    plans: Mapping[str, CropPlan],
    dets: Optional[Mapping[str, Sequence[Detection]]] = None,
    params: EvalParams = EvalParams(),
) -> EvalReport:
    """All first-stage metrics plus, when detections are given, MR-2 per subset.

    The headline ``mr2`` covers every non-ignore object; ``mr2_by_class``
    holds the reasonable / small / large (and occlusion) subsets. A subset
    without objects is left out.
    """
    sens = sensitivity(gt, plans, params)
    avg, mx = relative_processed_area(plans.values())
    ratio = mroi_per_object(list(plans.values()), gt)
    mr_all = None
    by_class: dict[str, float] = {}
    if dets is not None:
        mr_all = mr2(dets, gt, params)
        for name, pred in height_subsets(params, gt).items():
            if any(pred(g) for boxes in gt.values() for g in boxes if not g.ignore):
                by_class[name] = mr2(dets, gt, params, subset=pred)
    return EvalReport(
        sensitivity=sens.overall,
        sensitivity_small=sens.small,
        sensitivity_large=sens.large,
        avg_m_over_n=avg,
        max_m_over_n=mx,
        mroi_per_object=ratio,
        mr2=mr_all,
        mr2_by_class=by_class,
        n_images=len(plans),
        n_objects=sens.n_objects,
    )
