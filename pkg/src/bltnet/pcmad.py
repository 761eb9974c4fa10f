"""Proposal merging and adaptive downscaling (PCMAD).

First-stage proposals are extended by a fraction ``p`` of their size,
bucketed by height, greedily merged within each bucket whenever one crop is
cheaper than two, and each resulting crop is downscaled so that objects at
the bucket's lower height edge end up ``h`` pixels tall.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Optional, Sequence

from .geometry import Box, ImageMeta, bounding_box, extend, intersect

DEFAULT_BUCKET_EDGES = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)

# Height ranges as literally published, in multiples of h. They leave
# [1.5h, 2h) and [3h, 3.5h) uncovered.
PUBLISHED_HEIGHT_RANGES = ((1.0, 1.5), (2.0, 2.5), (2.5, 3.0), (3.5, 4.0))


@dataclass(frozen=True)
class Proposal:
    id: int
    box: Box
    score: float = 1.0

    def __post_init__(self):
        if self.box.area <= 0:
            raise ValueError(f"proposal {self.id} has zero area")


@dataclass(frozen=True)
class HeightBucket:
    """Half-open height range ``[lo*h, hi*h)``; ``hi`` may be ``inf``."""

    lo: float
    hi: float
    mergeable: bool = True


@dataclass(frozen=True)
class PcmadParams:
    """Knobs of the planner.

    ``bucket_edges`` are contiguous multiples of ``h`` starting at 1.0. When
    ``height_ranges`` is given it overrides the edges and may leave gaps;
    proposals falling into a gap are either kept as unmerged singletons
    (``gap_policy="isolate"``) or discarded (``"drop"``).
    """

    p: float = 0.1
    h: float = 256.0
    bucket_edges: tuple[float, ...] = DEFAULT_BUCKET_EDGES
    score_threshold: float = 0.5
    downscale: bool = True
    height_ranges: Optional[tuple[tuple[float, float], ...]] = None
    gap_policy: Literal["isolate", "drop"] = "isolate"

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")
        edges = tuple(float(e) for e in self.bucket_edges)
        if not edges or edges[0] != 1.0:
            raise ValueError("bucket_edges must start at 1.0")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bucket_edges must be strictly increasing")
        object.__setattr__(self, "bucket_edges", edges)
        if self.height_ranges is not None:
            ranges = tuple((float(lo), float(hi)) for lo, hi in self.height_ranges)
            if not ranges or ranges[0][0] < 1.0:
                raise ValueError("height_ranges must start at or above 1.0")
            for lo, hi in ranges:
                if hi <= lo:
                    raise ValueError(f"empty height range [{lo}, {hi})")
            if any(b[0] < a[1] for a, b in zip(ranges, ranges[1:])):
                raise ValueError("height_ranges must be sorted and non-overlapping")
            object.__setattr__(self, "height_ranges", ranges)
        if self.gap_policy not in ("isolate", "drop"):
            raise ValueError(f"unknown gap_policy {self.gap_policy!r}")

    @classmethod
    def published_ranges(cls, **kwargs) -> "PcmadParams":
        return cls(height_ranges=PUBLISHED_HEIGHT_RANGES, **kwargs)

    @property
    def buckets(self) -> tuple[HeightBucket, ...]:
        """All buckets, covering ``[0, inf)`` without holes, in height order."""
        out = [HeightBucket(0.0, 1.0)]
        if self.height_ranges is None:
            edges = self.bucket_edges
            out += [HeightBucket(a, b) for a, b in zip(edges, edges[1:])]
            out.append(HeightBucket(edges[-1], math.inf))
            return tuple(out)
        cursor = 1.0
        for lo, hi in self.height_ranges:
            if lo > cursor:
                out.append(HeightBucket(cursor, lo, mergeable=False))
            out.append(HeightBucket(lo, hi))
            cursor = hi
        out.append(HeightBucket(cursor, math.inf))
        return tuple(out)


@dataclass(frozen=True)
class ExtendedRoi:
    box: Box
    member_ids: frozenset
    member_bbox: Box

    @property
    def key(self) -> int:
        return min(self.member_ids)


@dataclass(frozen=True)
class MRoi:
    box: Box
    member_ids: frozenset
    bucket_index: int
    scale: float
    scaled_width_px: int
    scaled_height_px: int

    @property
    def scaled_pixels(self) -> int:
        return self.scaled_width_px * self.scaled_height_px


@dataclass(frozen=True)
class CropPlan:
    image: ImageMeta
    mrois: tuple[MRoi, ...] = ()
    rejected: tuple[tuple[int, str], ...] = ()

    @property
    def m_pixels(self) -> int:
        return sum(m.scaled_pixels for m in self.mrois)

    @property
    def m_over_n(self) -> float:
        return self.m_pixels / self.image.n_pixels

    @property
    def member_ids(self) -> set:
        return {i for m in self.mrois for i in m.member_ids}


def assign_buckets(proposals: Iterable[Proposal], params: PcmadParams) -> dict[int, list[Proposal]]:
    """Group proposals by the height bucket containing their box height."""
    buckets = params.buckets
    los = [b.lo * params.h for b in buckets]
    out: dict[int, list[Proposal]] = {}
    for prop in proposals:
        height = prop.box.height
        idx = 0
        for i, lo in enumerate(los):
            if height >= lo:
                idx = i
            else:
                break
        out.setdefault(idx, []).append(prop)
    return out


def scale_factor(bucket_index: int, params: PcmadParams) -> float:
    """Downscale factor for a bucket: 1 / (lower edge in units of h), never above 1."""
    if not params.downscale:
        return 1.0
    lo = params.buckets[bucket_index].lo
    return 1.0 if lo <= 1.0 else 1.0 / lo


def _merged_box(a: ExtendedRoi, b: ExtendedRoi, p: float, bounds: ImageMeta) -> tuple[Box, Box]:
    members = bounding_box([a.member_bbox, b.member_bbox])
    return extend(members, p, bounds), members


def _merged_area(a: Box, b: Box, p: float, width: float, height: float) -> float:
    # area of extend(bounding_box([a, b]), p), spelled out to skip allocations;
    # must stay operation-for-operation identical to geometry.extend
    x0, y0 = min(a.x_min, b.x_min), min(a.y_min, b.y_min)
    x1, y1 = max(a.x_max, b.x_max), max(a.y_max, b.y_max)
    dx, dy = p * (x1 - x0), p * (y1 - y0)
    ex0, ey0 = min(max(x0 - dx, 0.0), width), min(max(y0 - dy, 0.0), height)
    ex1, ey1 = max(min(x1 + dx, float(width)), 0.0), max(min(y1 + dy, float(height)), 0.0)
    return (ex1 - ex0) * (ey1 - ey0)


def merge_criterion(a: ExtendedRoi, b: ExtendedRoi, p: float, bounds: ImageMeta) -> bool:
    """True when a single crop around both ROIs is smaller than the two crops."""
    merged = _merged_area(a.member_bbox, b.member_bbox, p, bounds.width_px, bounds.height_px)
    return merged < a.box.area + b.box.area


def merge_bucket(
    rois: Sequence[ExtendedRoi],
    bounds: ImageMeta,
    p: float,
    stats: Optional[dict] = None,
) -> list[ExtendedRoi]:
    """Greedily merge ROIs of one height bucket until no pair is worth merging.

    Feasible pairs sit in a priority queue keyed by the horizontal distance
    between the current ROI centers, ties broken by the smaller member ids.
    Merging two ROIs replaces them with the extended bounding box of all their
    member proposals, and pairs touching either of them are discarded lazily.
    ROIs that stop having a partner stay in the output as they are; they
    remain eligible should a later merge produce a ROI they can pair with,
    so the result is a fixpoint of the merge criterion.

    Args:
        rois: extended ROIs of one bucket, with disjoint member sets.
        bounds: image the ROIs are clamped to.
        p: extension fraction used when re-extending merged members.
        stats: optional dict; ``"evaluations"`` receives the number of
            merge-criterion evaluations performed.

    Returns:
        The surviving ROIs ordered by their smallest member id.
    """
    ids = [i for roi in rois for i in roi.member_ids]
    if len(ids) != len(set(ids)):
        raise ValueError("member ids of the input ROIs overlap")
    # heap entries reference ROIs by a handle that is never reused
    live: dict[int, ExtendedRoi] = dict(enumerate(sorted(rois, key=lambda r: r.key)))
    next_handle = len(live)
    evaluations = 0
    heap: list[tuple[float, int, int, int, int]] = []

    def push_if_feasible(ha: int, hb: int):
        nonlocal evaluations
        a, b = live[ha], live[hb]
        evaluations += 1
        if merge_criterion(a, b, p, bounds):
            if b.key < a.key:
                ha, hb, a, b = hb, ha, b, a
            heapq.heappush(heap, (abs(a.box.center_x - b.box.center_x), a.key, b.key, ha, hb))

    handles = sorted(live)
    for i, ha in enumerate(handles):
        for hb in handles[i + 1:]:
            push_if_feasible(ha, hb)

    while heap:
        _, _, _, ha, hb = heapq.heappop(heap)
        if ha not in live or hb not in live:
            continue
        a, b = live[ha], live[hb]
        evaluations += 1
        if not merge_criterion(a, b, p, bounds):
            continue
        box, members = _merged_box(a, b, p, bounds)
        del live[ha], live[hb]
        hm = next_handle
        next_handle += 1
        live[hm] = ExtendedRoi(box, a.member_ids | b.member_ids, members)
        for other in list(live):
            if other != hm:
                push_if_feasible(hm, other)

    if stats is not None:
        stats["evaluations"] = stats.get("evaluations", 0) + evaluations
    return sorted(live.values(), key=lambda r: r.key)


def _materialize(roi: ExtendedRoi, bucket_index: int, params: PcmadParams) -> MRoi:
    scale = scale_factor(bucket_index, params)
    # round off float noise such as 300 * (1/1.5) = 200.00000000000003
    w = max(1, math.ceil(round(scale * roi.box.width, 9)))
    hgt = max(1, math.ceil(round(scale * roi.box.height, 9)))
    return MRoi(roi.box, roi.member_ids, bucket_index, scale, w, hgt)


def pcmad(
    proposals: Iterable[Proposal],
    image: ImageMeta,
    params: PcmadParams = PcmadParams(),
    stats: Optional[dict] = None,
) -> CropPlan:
    """Plan the second-stage crops of one image.

    Proposals below ``params.score_threshold`` are discarded. Proposals lying
    entirely outside the image are reported in ``CropPlan.rejected`` instead
    of raising.
    """
    kept: list[Proposal] = []
    rejected: list[tuple[int, str]] = []
    seen: set = set()
    bounds = image.bounds
    for prop in proposals:
        if prop.id in seen:
            raise ValueError(f"duplicate proposal id {prop.id} in image {image.image_id!r}")
        seen.add(prop.id)
        if prop.score < params.score_threshold:
            continue
        inside = intersect(prop.box, bounds)
        if inside is None or inside.area <= 0:
            rejected.append((prop.id, "outside image"))
            continue
        kept.append(prop)

    buckets = params.buckets
    mrois: list[MRoi] = []
    for idx, members in sorted(assign_buckets(kept, params).items()):
        rois = [ExtendedRoi(extend(m.box, params.p, image), frozenset([m.id]), m.box) for m in members]
        if buckets[idx].mergeable:
            rois = merge_bucket(rois, image, params.p, stats)
        elif params.gap_policy == "drop":
            rejected.extend((m.id, "height outside configured ranges") for m in members)
            continue
        mrois.extend(_materialize(r, idx, params) for r in rois)

    mrois.sort(key=lambda m: min(m.member_ids))
    return CropPlan(image, tuple(mrois), tuple(sorted(rejected)))
