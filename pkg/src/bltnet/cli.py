"""Command-line entry points: plan, cost, eval, simulate, sweep.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .cost_model import ProfileFormatError, get_profile, load_profiles, reduction_factor
from .experiments import SweepGrid, p_sweep, simulate, simulation_report, sweep
from .formats import (
    AnnotationRecord,
    DataFormatError,
    RunConfig,
    annotation_to_dict,
    cost_report_to_dict,
    detections_to_dict,
    dumps_report,
    eval_report_to_dict,
    load_run_config,
    plan_to_dict,
    read_annotations,
    read_detections,
    read_plans,
    report_header,
    write_jsonl,
)
from .metrics import evaluate, relative_processed_area
from .pcmad import PUBLISHED_HEIGHT_RANGES, CropPlan, pcmad
from .simulation import generate_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_pcmad_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("crop planning")
    g.add_argument("--p", type=float, help="proposal extension fraction per side")
    g.add_argument("--h", type=float, help="target crop height in px")
    g.add_argument("--score-threshold", type=float, help="drop proposals scoring below this")
    g.add_argument("--bucket-edges", type=_floats, help="contiguous height-bucket edges in units of h, e.g. 1,1.5,2")
    g.add_argument("--height-ranges", choices=["contiguous", "published"], default=None,
                   help="'published' uses the published ranges, which have gaps")
    g.add_argument("--gap-policy", choices=["isolate", "drop"], help="what to do with heights in range gaps")
    g.add_argument("--no-downscale", action="store_true", help="keep every crop at full resolution")


def _add_eval_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("evaluation")
    g.add_argument("--k", type=float, help="coverage fraction for sensitivity")
    g.add_argument("--match-iou", type=float, help="IoU needed to match ground truth")


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    pc = cfg.pcmad
    changes = {}
    for flag, name in (("p", "p"), ("h", "h"), ("score_threshold", "score_threshold"),
                       ("bucket_edges", "bucket_edges"), ("gap_policy", "gap_policy")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "height_ranges", None) == "published":
        changes["height_ranges"] = PUBLISHED_HEIGHT_RANGES
    elif getattr(args, "height_ranges", None) == "contiguous":
        changes["height_ranges"] = None
    if getattr(args, "no_downscale", False):
        changes["downscale"] = False
    ev = cfg.eval
    ev_changes = {}
    if getattr(args, "k", None) is not None:
        ev_changes["k"] = args.k
    if getattr(args, "match_iou", None) is not None:
        ev_changes["match_iou"] = args.match_iou
    out = cfg.replace(pcmad=replace(pc, **changes), eval=replace(ev, **ev_changes))
    if getattr(args, "nms_iou", None) is not None:
        out = out.replace(nms_iou=args.nms_iou)
    if getattr(args, "n_images", None) is not None:
        out = out.replace(n_images=args.n_images)
    if getattr(args, "seed", None) is not None:
        out = out.replace(scene=replace(out.scene, seed=args.seed))
    if getattr(args, "profile_stage1", None):
        out = out.replace(stage1=args.profile_stage1)
    if getattr(args, "profile_stage2", None):
        out = out.replace(stage2=args.profile_stage2)
    return out


def _check_plan(plan: CropPlan, proposal_ids: set):
    members = [i for m in plan.mrois for i in m.member_ids]
    if len(members) != len(set(members)):
        raise InvariantError(f"{plan.image.image_id}: a proposal appears in two crops")
    if not set(members) <= proposal_ids:
        raise InvariantError(f"{plan.image.image_id}: crop references an unknown proposal")
    if plan.m_pixels != sum(m.scaled_width_px * m.scaled_height_px for m in plan.mrois):
        raise InvariantError(f"{plan.image.image_id}: M disagrees with crop sizes")


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """Right-aligned text table; floats with 4 decimals, None as '-'."""

    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, bool):
            return "*" if v else ""
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def eval_table(report: dict) -> str:
    rows = [{"metric": k, "value": v} for k, v in sorted(report.items()) if not isinstance(v, dict)]
    for name, v in sorted(report.get("mr2_by_class", {}).items()):
        rows.append({"metric": f"mr2[{name}]", "value": v})
    return format_table(rows, ["metric", "value"])


def cmd_plan(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    records = read_annotations(args.annotations)
    plans = []
    for rec in records:
        props = rec.proposals or []
        plan = pcmad(props, rec.image, cfg.pcmad)
        _check_plan(plan, {p.id for p in props})
        plans.append(plan)
    write_jsonl(args.output, (plan_to_dict(p) for p in plans))
    summary = {"images": len(plans)}
    if plans:
        summary["avg_m_over_n"], summary["max_m_over_n"] = relative_processed_area(plans)
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def _profiles(args):
    return load_profiles(args.profiles)


def cmd_cost(args) -> int:
    profiles = _profiles(args)
    stage1 = get_profile(profiles, args.profile_stage1)
    stage2 = get_profile(profiles, args.profile_stage2)
    plans = read_plans(args.plans)
    if not plans:
        raise DataFormatError("plan file is empty", args.plans)
    per_image = []
    for plan in plans:
        c = reduction_factor(stage1, stage2, plan.image.n_pixels, plan.m_pixels)
        per_image.append({"image_id": plan.image.image_id, **cost_report_to_dict(c)})
    n_avg = sum(p.image.n_pixels for p in plans) / len(plans)
    m_avg = sum(p.m_pixels for p in plans) / len(plans)
    agg = reduction_factor(stage1, stage2, n_avg, m_avg)
    report = report_header(stage1=stage1.name, stage2=stage2.name, aggregate=cost_report_to_dict(agg), per_image=per_image)
    _emit(dumps_report(report), args.output)
    if args.output:
        sys.stdout.write(format_table([{"stage1": stage1.name, "stage2": stage2.name, **cost_report_to_dict(agg)}],
                                      ["stage1", "stage2", "baseline_gflops", "bltnet_gflops", "m_over_n", "reduction_factor"]))
    return EXIT_OK


def _id_diff(a: set, b: set, name_a: str, name_b: str) -> str:
    only_a, only_b = sorted(a - b), sorted(b - a)
    parts = []
    if only_a:
        parts.append(f"{len(only_a)} only in {name_a} (e.g. {', '.join(only_a[:5])})")
    if only_b:
        parts.append(f"{len(only_b)} only in {name_b} (e.g. {', '.join(only_b[:5])})")
    return "; ".join(parts)


def cmd_eval(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    records = read_annotations(args.annotations)
    gt = {r.image.image_id: list(r.gt or []) for r in records}
    dets = read_detections(args.detections)
    if set(gt) != set(dets):
        raise DataFormatError("image ids differ: " + _id_diff(set(gt), set(dets), "annotations", "detections"))
    if args.plans:
        plans = {p.image.image_id: p for p in read_plans(args.plans)}
        if set(plans) != set(gt):
            raise DataFormatError("image ids differ: " + _id_diff(set(gt), set(plans), "annotations", "plans"))
    else:
        plans = {r.image.image_id: CropPlan(r.image) for r in records}
    report = evaluate(gt, plans, dets, cfg.eval)
    body = eval_report_to_dict(report)
    if not args.plans:
        for key in ("sensitivity", "sensitivity_small", "sensitivity_large", "avg_m_over_n", "max_m_over_n", "mroi_per_object"):
            body[key] = None
    _emit(dumps_report(report_header(eval=body)), args.output)
    if args.output:
        sys.stdout.write(eval_table(body))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    scenes = generate_corpus(cfg.scene, cfg.n_images)
    result = simulate(cfg, scenes, profiles=_profiles(args), max_workers=args.workers)
    extra = {}
    if args.p_sweep:
        extra["p_sweep"] = p_sweep(cfg, args.p_sweep, scenes)
    report = simulation_report(cfg, result, **extra)
    text = dumps_report(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        write_jsonl(out / "annotations.jsonl", (
            annotation_to_dict(AnnotationRecord(s.image, list(s.gt), result.proposals[s.image.image_id]))
            for s in scenes))
        write_jsonl(out / "plans.jsonl", (plan_to_dict(result.plans[s.image.image_id]) for s in scenes))
        write_jsonl(out / "detections.jsonl", (
            detections_to_dict(s.image.image_id, result.detections[s.image.image_id]) for s in scenes))
    else:
        sys.stdout.write(text)
    if args.out:
        sys.stdout.write(eval_table(report["eval"]))
        cost = report["cost"]
        sys.stdout.write(format_table([{"stage1": cfg.stage1, "stage2": cfg.stage2, **cost}],
                                      ["stage1", "stage2", "baseline_gflops", "bltnet_gflops", "reduction_factor"]))
        if args.p_sweep:
            sys.stdout.write(format_table(extra["p_sweep"], ["p", "avg_m_over_n", "mr2"]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    axes = {"p": args.grid_p, "h": args.grid_h, "k": args.grid_k, "score_threshold": args.grid_score_threshold}
    if all(v is None for v in axes.values()):
        grid = SweepGrid.default()
    else:
        base = {"p": (cfg.pcmad.p,), "h": (cfg.pcmad.h,), "k": (cfg.eval.k,),
                "score_threshold": (cfg.pcmad.score_threshold,)}
        grid = SweepGrid(**{name: base[name] if v is None else v for name, v in axes.items()})
    if not grid.points():
        raise UsageError("sweep grid is empty")
    rows = sweep(cfg, grid)
    _emit(dumps_report(report_header(cfg, rows=rows)), args.output)
    if args.output:
        sys.stdout.write(format_table(rows, ["p", "h", "k", "score_threshold", "avg_m_over_n", "sensitivity",
                                             "mr2", "gflops", "reduction_factor", "pareto"]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bltnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bltnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="merge proposals into downscaled crops")
    p.add_argument("annotations", help="JSONL annotation file with proposals")
    p.add_argument("-o", "--output", required=True, help="crop-plan JSONL to write")
    p.add_argument("--config", help="JSON run config")
    _add_pcmad_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("cost", help="FLOPs of a crop plan against the full-image baseline")
    p.add_argument("plans", help="crop-plan JSONL")
    p.add_argument("--profile-stage1", required=True)
    p.add_argument("--profile-stage2", required=True)
    p.add_argument("--profiles", help="detector-profile file (default: bundled or $BLTNET_PROFILES)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("eval", help="sensitivity, M/N and MR-2 of detections")
    p.add_argument("--annotations", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--plans", help="crop plans, for the first-stage metrics")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("-o", "--output")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    for name, func, text in (("simulate", cmd_simulate, "run oracle stages on a synthetic corpus"),
                             ("sweep", cmd_sweep, "grid over p, h, k and score threshold with Pareto flags; "
                                                  "without --grid-* flags p in {0.05,0.1,0.2} x h in {192,256,320}")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--n-images", type=int)
        p.add_argument("--seed", type=int, help="scene seed")
        p.add_argument("--nms-iou", type=float)
        p.add_argument("--profile-stage1")
        p.add_argument("--profile-stage2")
        p.add_argument("--profiles")
        _add_pcmad_flags(p)
        _add_eval_flags(p)
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--out", help="directory for report.json and the generated corpus")
            p.add_argument("--p-sweep", type=_floats, help="also tabulate avg M/N and MR-2 for these p values")
            p.add_argument("--workers", type=int, default=None)
        else:
            p.add_argument("-o", "--output")
            p.add_argument("--grid-p", type=_floats)
            p.add_argument("--grid-h", type=_floats)
            p.add_argument("--grid-k", type=_floats)
            p.add_argument("--grid-score-threshold", type=_floats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ProfileFormatError) as exc:
        print(f"bltnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"bltnet: error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"bltnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"bltnet: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"bltnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
