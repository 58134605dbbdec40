"""Walk through one synthetic scene: generate it, record an expert path, render what the camera sees.

Writes a few PPM/PGM frames into ``demos_out/scene`` so the views can be inspected with any image viewer.

    python3 demos/01_scene_and_expert.py
"""
from pathlib import Path

import numpy as np

from scopesim.geometry import rotation_geodesic
from scopesim.pipeline import preprocess
from scopesim.renderer import CameraIntrinsics, render, write_depth_pgm, write_ppm
from scopesim.scenegen import DemoSpec, SceneSpec, generate_demonstration, generate_scene

out = Path("demos_out/scene")
out.mkdir(parents=True, exist_ok=True)

# A cavity-like coloured point cloud with a target landmark on its wall.
scene = generate_scene(SceneSpec(seed=3, point_count=60_000))
print(f"scene: {len(scene.positions)} points, {len(scene.landmarks)} landmarks")

# A noisy minimum-jerk camera path that ends framing the target.
raw, goal = generate_demonstration(scene, DemoSpec(seed=3))
print(f"raw demonstration: {len(raw)} samples, path length {raw.path_length():.2f} mm")

# Smoothing plus equal-distance resampling turn it into 1 mm expert waypoints.
expert = preprocess(raw)
steps = expert.step_lengths()
print(f"expert: {len(expert)} waypoints, steps {steps.min():.3f}..{steps.max():.3f} mm")
end = expert.pose(len(expert) - 1)
print(f"end vs goal: {np.linalg.norm(end.translation - goal.translation):.3f} mm, "
      f"{np.rad2deg(rotation_geodesic(end.rotation, goal.rotation)):.2f} deg")

# Render the start, middle and final views at preview resolution.
intr = CameraIntrinsics.default()
for name, j in (("start", 0), ("middle", len(expert) // 2), ("final", len(expert) - 1)):
    img = render(scene, expert.pose(j), intr)
    write_ppm(out / f"{name}.ppm", img)
    write_depth_pgm(out / f"{name}_depth.pgm", img)
    print(f"{name:>6}: {img.hit.mean():.0%} of pixels hit, median depth {np.median(img.depth[img.hit]):.1f} mm")
print(f"frames written to {out}/")
