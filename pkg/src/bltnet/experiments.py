"""Simulated runs, parameter sweeps and Pareto flagging."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .cost_model import DetectorProfile, get_profile, load_profiles
from .formats import RunConfig, cost_report_to_dict, eval_report_to_dict, report_header
from .pipeline import DatasetResult, PipelineParams, run_dataset
from .simulation import OracleDetector, OracleProposer, Scene, generate_corpus


def resolve_profiles(config: RunConfig, profiles: Optional[dict] = None) -> tuple[DetectorProfile, DetectorProfile]:
    profiles = profiles if profiles is not None else load_profiles()
    return get_profile(profiles, config.stage1), get_profile(profiles, config.stage2)


def simulate(
    config: RunConfig,
    scenes: Optional[Sequence[Scene]] = None,
    profiles: Optional[dict] = None,
    max_workers: Optional[int] = None,
) -> DatasetResult:
    """Generate (or reuse) a synthetic corpus and run both oracle stages on it."""
    if scenes is None:
        scenes = generate_corpus(config.scene, config.n_images)
    stage1, stage2 = resolve_profiles(config, profiles)
    params = PipelineParams(config.pcmad, config.nms_iou, config.eval)
    return run_dataset(
        OracleProposer(config.proposer, config.scene),
        OracleDetector(config.detector, config.scene.aspect_ratio),
        [s.as_sample() for s in scenes],
        stage1,
        stage2,
        params,
        max_workers=max_workers,
    )


def simulation_report(config: RunConfig, result: DatasetResult, **extra) -> dict:
    return report_header(config, eval=eval_report_to_dict(result.eval), cost=cost_report_to_dict(result.cost), **extra)


def p_sweep(config: RunConfig, ps: Sequence[float], scenes: Optional[Sequence[Scene]] = None) -> list[dict]:
    """Rows of ``(p, avg M/N, MR-2)`` on one shared corpus."""
    if scenes is None:
        scenes = generate_corpus(config.scene, config.n_images)
    rows = []
    for p in ps:
        res = simulate(config.replace(pcmad=replace(config.pcmad, p=float(p))), scenes)
        rows.append({"p": float(p), "avg_m_over_n": res.eval.avg_m_over_n, "mr2": res.eval.mr2})
    return rows


def pareto_flags(points: Sequence[Sequence[float]]) -> list[bool]:
    """Mark points not dominated by any other point (all objectives minimized).

    ``a`` dominates ``b`` when it is no worse in every objective and strictly
    better in at least one. Identical points do not dominate each other.
    """
    flags = []
    for i, a in enumerate(points):
        dominated = False
        for j, b in enumerate(points):
            if i != j and all(y <= x for x, y in zip(a, b)) and any(y < x for x, y in zip(a, b)):
                dominated = True
                break
        flags.append(not dominated)
    return flags


@dataclass(frozen=True)
class SweepGrid:
    p: tuple[float, ...] = (0.1,)
    h: tuple[float, ...] = (256.0,)
    k: tuple[float, ...] = (0.85,)
    score_threshold: tuple[float, ...] = (0.5,)

    @classmethod
    def default(cls) -> "SweepGrid":
        """3x3 grid over extension and target crop height."""
        return cls(p=(0.05, 0.1, 0.2), h=(192.0, 256.0, 320.0))

    def points(self) -> list[tuple[float, float, float, float]]:
        return list(itertools.product(self.p, self.h, self.k, self.score_threshold))


def sweep(config: RunConfig, grid: SweepGrid, scenes: Optional[Sequence[Scene]] = None) -> list[dict]:
    """Run every grid point on one corpus and flag the Pareto-efficient rows.

    Objectives are GFLOPs and MR-2, both minimized.
    """
    points = grid.points()
    if not points:
        raise ValueError("sweep grid is empty")
    if scenes is None:
        scenes = generate_corpus(config.scene, config.n_images)
    rows = []
    for p, h, k, thr in points:
        cfg = config.replace(
            pcmad=replace(config.pcmad, p=float(p), h=float(h), score_threshold=float(thr)),
            eval=replace(config.eval, k=float(k)),
        )
        res = simulate(cfg, scenes)
        rows.append(
            {
                "p": float(p),
                "h": float(h),
                "k": float(k),
                "score_threshold": float(thr),
                "avg_m_over_n": res.eval.avg_m_over_n,
                "sensitivity": res.eval.sensitivity,
                "mr2": res.eval.mr2,
                "gflops": res.cost.bltnet_gflops,
                "reduction_factor": res.cost.reduction_factor,
            }
        )
    flags = pareto_flags([(r["gflops"], r["mr2"]) for r in rows])
    for row, flag in zip(rows, flags):
        row["pareto"] = flag
    return rows
