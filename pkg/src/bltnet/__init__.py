"""Crop planning, FLOPs accounting and evaluation for background-skipping two-stage detection."""

__version__ = "0.1.0"

from .cost_model import CostReport, DetectorProfile, flops_baseline, flops_bltnet, load_profiles, reduction_factor
from .geometry import Box, ImageMeta, area, bounding_box, extend, intersect, iou, union_area
from .metrics import (
    Detection,
    EvalParams,
    EvalReport,
    GtBox,
    evaluate,
    match_detections,
    mr2,
    mroi_per_object,
    relative_processed_area,
    sensitivity,
)
from .pcmad import CropPlan, ExtendedRoi, MRoi, PcmadParams, Proposal, assign_buckets, merge_bucket, pcmad, scale_factor
from .pipeline import PipelineParams, Sample, global_nms, remap_detection, run_dataset, run_image

__all__ = [
    "Box", "ImageMeta", "area", "bounding_box", "extend", "intersect", "iou", "union_area",
    "CropPlan", "ExtendedRoi", "MRoi", "PcmadParams", "Proposal", "assign_buckets", "merge_bucket", "pcmad",
    "scale_factor",
    "CostReport", "DetectorProfile", "flops_baseline", "flops_bltnet", "load_profiles", "reduction_factor",
    "Detection", "EvalParams", "EvalReport", "GtBox", "evaluate", "match_detections", "mr2", "mroi_per_object",
    "relative_processed_area", "sensitivity",
    "PipelineParams", "Sample", "global_nms", "remap_detection", "run_dataset", "run_image",
]
