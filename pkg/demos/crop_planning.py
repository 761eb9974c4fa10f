"""
Planning crops from proposals
=============================

Each proposal is grown by a margin p, grouped by height, and greedily merged
with horizontal neighbours whenever one crop is smaller than two. Tall groups
are then downscaled so the second stage sees objects near its preferred height.
"""

from bltnet.geometry import Box, ImageMeta, extend
from bltnet.pcmad import PcmadParams, Proposal, pcmad

image = ImageMeta("street", 2048, 1024)

# a single tall pedestrian: 520 px high, margin 10% per side
person = Proposal(0, Box(700, 100, 1300, 620))
print("extended:", extend(person.box, 0.1, image))
plan = pcmad([person], image, PcmadParams(p=0.1, h=256))
(crop,) = plan.mrois
print(f"scale {crop.scale}, crop {crop.scaled_width_px}x{crop.scaled_height_px}, M = {plan.m_pixels}")

# three overlapping people in a row collapse into one crop
row = [Proposal(i, Box(x, 400, x + 40, 500)) for i, x in enumerate((100, 115, 130))]
plan = pcmad(row, image, PcmadParams(p=0.1))
print(f"\n{len(row)} proposals -> {len(plan.mrois)} crop(s):", [sorted(m.member_ids) for m in plan.mrois])

# far apart, merging would add background, so they stay separate
apart = [Proposal(0, Box(100, 400, 140, 500)), Proposal(1, Box(900, 400, 940, 500))]
print("far apart ->", len(pcmad(apart, image, PcmadParams(p=0.1)).mrois), "crops")

# a small and a large object side by side land in different height buckets
mixed = [Proposal(0, Box(100, 400, 140, 500)), Proposal(1, Box(120, 100, 320, 700))]
for m in pcmad(mixed, image, PcmadParams(p=0.1)).mrois:
    print(f"bucket {m.bucket_index}: members {sorted(m.member_ids)}, scale {m.scale:.2f}")

# low-confidence proposals are discarded before planning
weak = [Proposal(0, Box(100, 400, 140, 500), score=0.2)]
print("crops from a weak proposal:", len(pcmad(weak, image, PcmadParams(score_threshold=0.5)).mrois))

# the published height ranges leave gaps; choose what happens there
gap = [Proposal(0, Box(0, 0, 100, 450))]  # 450 px, inside [1.5h, 2h) for h=256
for policy in ("isolate", "drop"):
    plan = pcmad(gap, image, PcmadParams.published_ranges(gap_policy=policy))
    print(f"gap policy {policy}: crops {len(plan.mrois)}, rejected {plan.rejected}")
