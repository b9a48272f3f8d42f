"""The three cropping modes: random training crops, deterministic prefix
crops for evaluation, and sliding windows for the robustness sweep.

Crops keep the original day offsets of retained frames, so a window cut from
mid-season still knows it is mid-season.

Run:  python demos/02_temporal_cropping.py
"""

import numpy as np

from tea import RatioSchedule, SitsSample, prefix_crop, random_crop, sliding_windows

rng = np.random.default_rng(0)
T = 24
sample = SitsSample(
    values=rng.normal(size=(T, 4, 16, 16)).astype(np.float32),
    day_offsets=np.arange(T, dtype=np.int64) * 5,
    valid_mask=np.ones(T, dtype=bool),
    labels=np.zeros((16, 16), dtype=np.int64),
    sample_id="demo")

print("training crops (random ratio, random start):")
for _ in range(5):
    crop, window = random_crop(sample, rng, min_ratio=0.1)
    print(f"  frames [{window.start_index:2d}, "
          f"{window.start_index + window.length:2d})  ratio={window.ratio:.2f}  "
          f"day offsets {crop.day_offsets[0]:3d}..{crop.day_offsets[-1]:3d}")

print("\nratio-only mode (anchored at the first frame):")
for _ in range(3):
    _, window = random_crop(sample, rng, min_ratio=0.1, random_start=False)
    print(f"  frames [0, {window.length:2d})  ratio={window.ratio:.2f}")

schedule = RatioSchedule()
print("\nevaluation prefixes at the ten graduated ratios:")
lengths = [prefix_crop(sample, r).num_frames for r in schedule.ratios]
print("  ratios :", [f"{r:.0%}" for r in schedule.ratios])
print("  frames :", lengths)

print("\nsliding windows, length 20% at a 10% step:")
for k, window in enumerate(sliding_windows(T, 0.2, 0.1)):
    print(f"  start {k * 10:3d}%  frames [{window.start_index:2d}, "
          f"{window.start_index + window.length:2d})")
