"""
FLOPs budget of a two-stage detector
====================================

A cheap first stage scans the whole frame, and an accurate detector then runs
only on the crops it proposes. Cost is linear in pixels, so everything follows
from per-pixel FLOPs and the processed fraction M/N.
"""

from bltnet.cost_model import flops_baseline, flops_bltnet, load_profiles, reduction_factor

profiles = load_profiles()
N = 2048 * 1024

# the accurate detector alone, on the full frame
hrnet = profiles["pedestron-hrnet"]
print(f"full-frame {hrnet.name}: {flops_baseline(hrnet, N) / 1e9:.1f} GFLOPs")

# same detector behind a light proposer that keeps ~9% of the pixels
cs = profiles["cs"]
m = 0.091 * N
print(f"two-stage at M/N=0.091: {flops_bltnet(cs, hrnet, N, m) / 1e9:.1f} GFLOPs")

# the speed-up depends only on B/A and M/N
r = reduction_factor(cs, hrnet, N, m)
print(f"B/A = {r.b_over_a:.3f}, reduction factor = {r.reduction_factor:.2f}")

# sweep M/N to see where the proposer cost starts to dominate
print("\n M/N    GFLOPs  factor")
for frac in (0.0, 0.02, 0.05, 0.1, 0.2, 0.4):
    r = reduction_factor(cs, hrnet, N, frac * N)
    print(f"{frac:5.2f}  {r.bltnet_gflops:7.1f}  {r.reduction_factor:6.2f}")

# a heavier detector gains more from the same crops
print()
for name in ("pedestron-mv2", "pedestron-hrnet", "acsp-rn101"):
    r = reduction_factor(cs, profiles[name], N, m)
    print(f"{name:16s} factor {r.reduction_factor:.2f}")
