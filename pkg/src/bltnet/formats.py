"""Line-delimited JSON records, run configs and report serialization.

Field names are documented in ``docs/formats.md``. All writers sort keys and
use Python's shortest round-trip float repr, so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Union

from . import __version__
from .cost_model import CostReport
from .geometry import Box, ImageMeta
from .metrics import Detection, EvalParams, EvalReport, GtBox
from .pcmad import CropPlan, MRoi, PcmadParams, Proposal
from .simulation import OracleConfig, SceneConfig

PathLike = Union[str, Path]


class DataFormatError(ValueError):
    """Bad input data; carries the 1-based line number when known."""

    def __init__(self, message: str, source: str = "", lineno: Optional[int] = None):
        where = f"{source}:{lineno}: " if lineno is not None else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.lineno = lineno


@dataclass
class AnnotationRecord:
    """One image: metadata, optional ground truth, optional proposals.

    Keys not known to the schema are kept in ``extra`` and written back.
    """

    image: ImageMeta
    gt: Optional[list[GtBox]] = None
    proposals: Optional[list[Proposal]] = None
    extra: dict = field(default_factory=dict)


def _box(value, what: str) -> Box:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValueError(f"{what} must be a list of 4 numbers")
    return Box(*(float(v) for v in value))


def _box_list(b: Box) -> list[float]:
    return [b.x_min, b.y_min, b.x_max, b.y_max]


def read_jsonl(path: PathLike) -> Iterator[tuple[int, dict]]:
    """Yield ``(lineno, record)`` for every non-blank line."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON ({exc.msg})", str(path), lineno) from None
            if not isinstance(rec, dict):
                raise DataFormatError("record must be a JSON object", str(path), lineno)
            yield lineno, rec


def write_jsonl(path: PathLike, records: Iterable[dict]):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _image(rec: dict) -> ImageMeta:
    return ImageMeta(str(rec["image_id"]), int(rec["width"]), int(rec["height"]))


def annotation_from_dict(rec: dict) -> AnnotationRecord:
    rec = dict(rec)
    image = _image(rec)
    for key in ("image_id", "width", "height"):
        rec.pop(key)
    gt = None
    if "gt" in rec:
        gt = [
            GtBox(_box(g["box"], "gt box"), bool(g.get("ignore", False)),
                  None if g.get("occlusion") is None else float(g["occlusion"]))
            for g in rec.pop("gt")
        ]
    proposals = None
    if "proposals" in rec:
        proposals = [
            Proposal(int(p["id"]), _box(p["box"], "proposal box"), float(p.get("score", 1.0)))
            for p in rec.pop("proposals")
        ]
        ids = [p.id for p in proposals]
        if len(ids) != len(set(ids)):
            raise ValueError("proposal ids must be unique within an image")
    return AnnotationRecord(image, gt, proposals, rec)


def annotation_to_dict(a: AnnotationRecord) -> dict:
    out = dict(a.extra)
    out.update(image_id=a.image.image_id, width=a.image.width_px, height=a.image.height_px)
    if a.gt is not None:
        out["gt"] = []
        for g in a.gt:
            d: dict[str, Any] = {"box": _box_list(g.box), "ignore": g.ignore}
            if g.occlusion is not None:
                d["occlusion"] = g.occlusion
            out["gt"].append(d)
    if a.proposals is not None:
        out["proposals"] = [{"id": p.id, "box": _box_list(p.box), "score": p.score} for p in a.proposals]
    return out


def read_annotations(path: PathLike) -> list[AnnotationRecord]:
    out, seen = [], set()
    for lineno, rec in read_jsonl(path):
        try:
            a = annotation_from_dict(rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad annotation record ({type(exc).__name__}: {exc})", str(path), lineno) from None
        if a.image.image_id in seen:
            raise DataFormatError(f"duplicate image_id {a.image.image_id!r}", str(path), lineno)
        seen.add(a.image.image_id)
        out.append(a)
    return out


def plan_to_dict(plan: CropPlan) -> dict:
    return {
        "image_id": plan.image.image_id,
        "width": plan.image.width_px,
        "height": plan.image.height_px,
        "m_pixels": plan.m_pixels,
        "m_over_n": plan.m_over_n,
        "mrois": [
            {
                "box": _box_list(m.box),
                "member_ids": sorted(m.member_ids),
                "bucket_index": m.bucket_index,
                "scale": m.scale,
                "scaled_width": m.scaled_width_px,
                "scaled_height": m.scaled_height_px,
            }
            for m in plan.mrois
        ],
        "rejected": [{"id": i, "reason": r} for i, r in plan.rejected],
    }


def plan_from_dict(rec: dict) -> CropPlan:
    mrois = tuple(
        MRoi(
            _box(m["box"], "mroi box"),
            frozenset(int(i) for i in m["member_ids"]),
            int(m["bucket_index"]),
            float(m["scale"]),
            int(m["scaled_width"]),
            int(m["scaled_height"]),
        )
        for m in rec["mrois"]
    )
    rejected = tuple((int(r["id"]), str(r["reason"])) for r in rec.get("rejected", ()))
    plan = CropPlan(_image(rec), mrois, rejected)
    if "m_pixels" in rec and int(rec["m_pixels"]) != plan.m_pixels:
        raise ValueError(f"m_pixels {rec['m_pixels']} disagrees with the mROI sizes ({plan.m_pixels})")
    return plan


def read_plans(path: PathLike) -> list[CropPlan]:
    out = []
    for lineno, rec in read_jsonl(path):
        try:
            out.append(plan_from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad plan record ({type(exc).__name__}: {exc})", str(path), lineno) from None
    return out


def detections_to_dict(image_id: str, dets: Iterable[Detection]) -> dict:
    return {"image_id": image_id, "detections": [{"box": _box_list(d.box), "score": d.score} for d in dets]}


def read_detections(path: PathLike) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for lineno, rec in read_jsonl(path):
        try:
            image_id = str(rec["image_id"])
            dets = [Detection(_box(d["box"], "detection box"), float(d["score"])) for d in rec["detections"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad detections record ({type(exc).__name__}: {exc})", str(path), lineno) from None
        if image_id in out:
            raise DataFormatError(f"duplicate image_id {image_id!r}", str(path), lineno)
        out[image_id] = dets
    return out


def _clean(value):
    """JSON-safe copy: NaN/inf become null, tuples become lists."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def eval_report_to_dict(r: EvalReport) -> dict:
    return _clean(dataclasses.asdict(r))


def cost_report_to_dict(c: CostReport) -> dict:
    d = dataclasses.asdict(c)
    d["baseline_gflops"] = c.baseline_gflops
    d["bltnet_gflops"] = c.bltnet_gflops
    return _clean(d)


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def default_proposer_config() -> OracleConfig:
    return OracleConfig(
        miss_prob=0.01,
        center_jitter_sigma=0.04,
        height_jitter_sigma=0.05,
        fp_rate=4.5,
        fp_height_median_px=400.0,
        fp_height_sigma=0.5,
        seed=1,
    )


def default_detector_config() -> OracleConfig:
    return OracleConfig(
        miss_prob=0.02,
        center_jitter_sigma=0.03,
        height_jitter_sigma=0.03,
        fp_rate=0.02,
        fp_score_range=(0.3, 0.7),
        min_detectable_height_px=20.0,
        seed=2,
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a simulated run."""

    pcmad: PcmadParams = field(default_factory=PcmadParams)
    eval: EvalParams = field(default_factory=EvalParams)
    nms_iou: float = 0.5
    scene: SceneConfig = field(default_factory=SceneConfig)
    proposer: OracleConfig = field(default_factory=default_proposer_config)
    detector: OracleConfig = field(default_factory=default_detector_config)
    n_images: int = 200
    stage1: str = "cs"
    stage2: str = "pedestron-hrnet"

    def to_dict(self) -> dict:
        return _clean(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw: dict[str, Any] = {}
        nested = {"pcmad": PcmadParams, "eval": EvalParams, "scene": SceneConfig,
                  "proposer": OracleConfig, "detector": OracleConfig}
        base = cls()
        for name, value in d.items():
            if name in nested:
                kw[name] = _build(nested[name], value, getattr(base, name))
            else:
                kw[name] = value
        return cls(**kw)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _build(cls, values: dict, default):
    if not isinstance(values, dict):
        raise ValueError(f"{cls.__name__} config must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return dataclasses.replace(default, **{k: _tupleize(v) for k, v in values.items()})


def load_run_config(path: Optional[PathLike]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def report_header(config: Optional[RunConfig] = None, **extra) -> dict:
    out = {"tool": "bltnet", "version": __version__}
    if config is not None:
        out["config"] = config.to_dict()
    out.update(extra)
    return out


def bundled_corpus_path() -> Path:
    """Synthetic 500-image corpus with ground truth and recorded proposals.

    Generated by ``bltnet simulate --n-images 500`` with the default config.
    """
    from importlib import resources

    return Path(str(resources.files("bltnet").joinpath("data/synthetic_corpus.jsonl")))


def load_bundled_corpus() -> list[AnnotationRecord]:
    return read_annotations(bundled_corpus_path())
