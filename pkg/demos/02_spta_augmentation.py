"""Augment one expert path with SPTA and check what the augmentation promises.

Each variant starts from a random pose in the workspace, jumps onto the expert path at the closest
waypoint and then converges back with an exponentially decaying offset, so every variant still ends at
the expert's goal.

    python3 demos/02_spta_augmentation.py
"""
import numpy as np

from scopesim.geometry import EulerPose
from scopesim.pipeline import preprocess
from scopesim.scenegen import DemoSpec, SceneSpec, generate_demonstration, generate_scene
from scopesim.spta import (
    AugmentationParams,
    augment,
    decay_schedule,
    discrete_frechet,
    sample_start,
    shape_similarity,
    workspace_from_trajectory,
)

scene = generate_scene(SceneSpec(seed=3, point_count=30_000))
expert = preprocess(generate_demonstration(scene, DemoSpec(seed=3))[0])
params = AugmentationParams(rate=8)
rng = np.random.default_rng(0)

ws = workspace_from_trajectory(expert, params, rng)
print(f"expert: {len(expert)} waypoints; workspace box {ws.min_corner.round(2)} .. {ws.max_corner.round(2)}")

print(f"{'variant':>7} {'j*':>3} {'dist mm':>8} {'eps':>5} {'start gap':>10} {'end gap':>8} {'shape':>6} {'frechet':>8}")
made = 0
while made < params.rate:
    S = sample_start(ws, EulerPose.from_array(expert.poses[0]), rng)
    try:
        res = augment(expert, S, params, rng)
    except ValueError:
        continue  # the start was closest to the final waypoint, so nothing is left to follow
    made += 1
    out, ref = res.trajectory, expert.positions[res.j_star:]
    start_gap = np.linalg.norm(out.positions[0] - S.position)
    end_gap = np.linalg.norm(out.positions[-1] - ref[-1])
    print(f"{made:>7} {res.j_star:>3} {res.dist:>8.3f} {res.epsilon:>5.2f} {start_gap:>10.4f} {end_gap:>8.4f} "
          f"{shape_similarity(out.poses, expert.poses[res.j_star:]):>6.3f} {discrete_frechet(out.positions, ref):>8.3f}")

# The offset shrinks monotonically from the start gap towards (nearly) nothing.
L = len(expert) - 1
print("decay schedule (eps = 0.1):", np.round(decay_schedule(0.1, -5.0 / L, L)[:: max(1, L // 8)], 3))
