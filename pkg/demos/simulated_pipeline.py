"""
End to end on synthetic street scenes
=====================================

Oracle stages stand in for trained networks: they see the ground truth and
corrupt it with controlled misses, jitter and false alarms. This makes the
pipeline's accuracy and cost measurable without any images.
"""

import numpy as np

from bltnet.cost_model import load_profiles
from bltnet.pipeline import run_dataset
from bltnet.simulation import OracleConfig, OracleDetector, OracleProposer, SceneConfig, generate_corpus, noiseless

profiles = load_profiles()
cs, hrnet = profiles["cs"], profiles["pedestron-hrnet"]

scenes = generate_corpus(SceneConfig(seed=3), 100)
heights = np.array([g.height_px for s in scenes for g in s.gt])
print(f"{len(scenes)} scenes, {heights.size} objects, {np.mean(heights < 100):.0%} below 100 px")

# perfect stages: every object found, cost set only by the crops
res = run_dataset(OracleProposer(noiseless()), OracleDetector(noiseless()), [s.as_sample() for s in scenes], cs, hrnet)
print(f"\nnoiseless: sensitivity {res.eval.sensitivity:.3f}, MR-2 {res.eval.mr2:.3f}, "
      f"M/N {res.eval.avg_m_over_n:.3f}, factor {res.cost.reduction_factor:.2f}")

# a realistic proposer misses some objects and raises false alarms
proposer = OracleProposer(OracleConfig(miss_prob=0.03, center_jitter_sigma=0.05, height_jitter_sigma=0.05,
                                       fp_rate=4.0, seed=1))
detector = OracleDetector(OracleConfig(miss_prob=0.02, center_jitter_sigma=0.03, height_jitter_sigma=0.03,
                                       min_detectable_height_px=20.0, seed=2))
res = run_dataset(proposer, detector, [s.as_sample() for s in scenes], cs, hrnet)
print(f"noisy:     sensitivity {res.eval.sensitivity:.3f}, MR-2 {res.eval.mr2:.3f}, "
      f"M/N {res.eval.avg_m_over_n:.3f}, factor {res.cost.reduction_factor:.2f}")
for name, value in sorted(res.eval.mr2_by_class.items()):
    print(f"  MR-2 [{name}] {value:.3f}")

# crowds let one crop serve several people
for fraction in (0.0, 0.5, 0.9):
    crowd = generate_corpus(SceneConfig(cluster_fraction=fraction, seed=4), 60)
    r = run_dataset(OracleProposer(noiseless()), OracleDetector(noiseless()), [s.as_sample() for s in crowd], cs, hrnet)
    print(f"cluster fraction {fraction:.1f}: {r.eval.mroi_per_object:.2f} crops per object")
