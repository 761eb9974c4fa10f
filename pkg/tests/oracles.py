"""Slow, obviously-correct reference implementations used as test oracles.

None of these import the code they check; boxes are plain
``(x0, y0, x1, y1)`` tuples.
"""

import math

import numpy as np


def raster_union_area(boxes, size=64):
    """Count unit cells covered by integer-coordinate boxes."""
    grid = np.zeros((size, size), dtype=bool)
    for x0, y0, x1, y1 in boxes:
        grid[int(y0):int(y1), int(x0):int(x1)] = True
    return int(grid.sum())


def _area(b):
    return (b[2] - b[0]) * (b[3] - b[1])


def _extend(b, p, w, h):
    x0, y0, x1, y1 = b
    dx, dy = p * (x1 - x0), p * (y1 - y0)
    return (
        min(max(x0 - dx, 0.0), w),
        min(max(y0 - dy, 0.0), h),
        max(min(x1 + dx, float(w)), 0.0),
        max(min(y1 + dy, float(h)), 0.0),
    )


def _bbox(bs):
    return (min(b[0] for b in bs), min(b[1] for b in bs), max(b[2] for b in bs), max(b[3] for b in bs))


def naive_merge(props, p, w, h):
    """Greedy merge, recomputing every pair from scratch on each step.

    ``props`` maps id -> un-extended box. Returns a list of
    ``(box, frozenset(ids))`` sorted by smallest id.
    """
    rois = [{"ids": {i}, "members": [b], "box": _extend(b, p, w, h)} for i, b in sorted(props.items())]
    while True:
        best = None
        for a in range(len(rois)):
            for b in range(a + 1, len(rois)):
                ra, rb = rois[a], rois[b]
                merged = _extend(_bbox(ra["members"] + rb["members"]), p, w, h)
                if _area(merged) < _area(ra["box"]) + _area(rb["box"]):
                    ca = (ra["box"][0] + ra["box"][2]) / 2
                    cb = (rb["box"][0] + rb["box"][2]) / 2
                    first, second = sorted([min(ra["ids"]), min(rb["ids"])])
                    key = (abs(ca - cb), first, second)
                    if best is None or key < best[0]:
                        best = (key, a, b, merged)
        if best is None:
            break
        _, a, b, merged = best
        ra, rb = rois[a], rois[b]
        new = {"ids": ra["ids"] | rb["ids"], "members": ra["members"] + rb["members"], "box": merged}
        rois = [r for i, r in enumerate(rois) if i not in (a, b)] + [new]
    return sorted(((r["box"], frozenset(r["ids"])) for r in rois), key=lambda t: min(t[1]))


def _iou(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw < 0 or ih < 0:
        return 0.0
    inter = iw * ih
    return inter / (_area(a) + _area(b) - inter)


def brute_force_nms(dets, thr):
    """``dets``: list of (box, score). Returns kept indices in pick order."""
    remaining = list(range(len(dets)))
    kept = []
    while remaining:
        top = max(remaining, key=lambda i: (dets[i][1], _area(dets[i][0]), -i))
        kept.append(top)
        remaining = [i for i in remaining if i != top and _iou(dets[i][0], dets[top][0]) < thr]
    return kept


def _match_counts(dets, gts, match_iou):
    """dets: (box, score); gts: (box, ignore). Returns (tp, fp)."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    used = set()
    tp = fp = 0
    for di in order:
        cands = [
            (_iou(dets[di][0], g[0]), gi)
            for gi, g in enumerate(gts)
            if not g[1] and gi not in used and _iou(dets[di][0], g[0]) >= match_iou
        ]
        if cands:
            top = max(c[0] for c in cands)
            gi = min(gi for o, gi in cands if o == top)
            used.add(gi)
            tp += 1
        elif not any(g[1] and _iou(dets[di][0], g[0]) >= match_iou for g in gts):
            fp += 1
    return tp, fp


def brute_force_mr2(dets_by_image, gts_by_image, fppi_points, match_iou=0.5, floor=1e-4):
    """Re-run matching at every distinct threshold and take the lower envelope."""
    images = sorted(set(dets_by_image) | set(gts_by_image))
    n_gt = sum(1 for i in images for g in gts_by_image.get(i, []) if not g[1])
    scores = sorted({d[1] for i in images for d in dets_by_image.get(i, [])})
    curve = [(0.0, 1.0)]
    for t in scores:
        tp = fp = 0
        for i in images:
            a, b = _match_counts([d for d in dets_by_image.get(i, []) if d[1] >= t], gts_by_image.get(i, []), match_iou)
            tp += a
            fp += b
        curve.append((fp / len(images), 1 - tp / n_gt))
    samples = [min(mr for f, mr in curve if f <= ref) for ref in fppi_points]
    if all(s == 0 for s in samples):
        return 0.0
    return math.exp(sum(math.log(max(s, floor)) for s in samples) / len(samples))


def dominated(a, b):
    """True when b dominates a (minimization)."""
    return all(y <= x for x, y in zip(a, b)) and any(y < x for x, y in zip(a, b))


def skyline(points):
    """Pareto set by sorting on the first objective, then a running minimum of the second."""
    order = sorted(range(len(points)), key=lambda i: (points[i][0], points[i][1]))
    keep = set()
    best_second = math.inf
    i = 0
    while i < len(order):
        j = i
        group = []
        while j < len(order) and points[order[j]][0] == points[order[i]][0]:
            group.append(order[j])
            j += 1
        low = min(points[g][1] for g in group)
        if low < best_second:
            keep.update(g for g in group if points[g][1] == low)
            best_second = low
        i = j
    return keep
