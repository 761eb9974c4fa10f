"""
Accuracy against compute
========================

Larger margins and taller target crops help the second stage but cost pixels.
A grid sweep exposes the trade-off; points no other point beats on both MR-2
and GFLOPs form the Pareto front.
"""

from bltnet.experiments import SweepGrid, sweep
from bltnet.formats import RunConfig
from bltnet.simulation import generate_corpus

config = RunConfig(n_images=60)
scenes = generate_corpus(config.scene, config.n_images)

rows = sweep(config, SweepGrid(p=(0.0, 0.05, 0.1, 0.2), h=(128.0, 256.0)), scenes)
print("    p      h   M/N    GFLOPs   MR-2  front")
for r in sorted(rows, key=lambda r: r["gflops"]):
    mark = "*" if r["pareto"] else ""
    print(f"{r['p']:5.2f}  {r['h']:5.0f}  {r['avg_m_over_n']:.3f}  {r['gflops']:7.1f}  {r['mr2']:.3f}  {mark}")
