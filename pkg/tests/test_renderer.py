import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from scopesim.geometry import EulerPose, Pose, euler_to_pose
from scopesim.renderer import (
    CameraIntrinsics,
    PointCloudScene,
    RGBDImage,
    SceneFormatError,
    backproject,
    downscale,
    read_pnm,
    read_scene,
    render,
    render_batch,
    splat_offsets,
    write_depth_pgm,
    write_ppm,
    write_scene,
)

INTR = CameraIntrinsics.default(40, 32)


def reference_render(scene, pose, intr, radius):
    """Plain-python z-buffer used as an oracle for the compiled kernel."""
    H, W = intr.height, intr.width
    depth = np.full((H, W), np.inf)
    index = np.full((H, W), -1)
    cam = (scene.positions - pose.translation) @ pose.rotation
    offs = [(du, dv) for dv in range(-radius, radius + 1) for du in range(-radius, radius + 1) if du * du + dv * dv <= radius * radius]
    for i, (x, y, z) in enumerate(cam):
        if z <= 0.1:
            continue
        u, v = intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy
        ui, vi = math.floor(u + 0.5), math.floor(v + 0.5)
        if not (0 <= ui < W and 0 <= vi < H):
            continue
        for du, dv in offs:
            uu, vv = ui + du, vi + dv
            if 0 <= uu < W and 0 <= vv < H and z < depth[vv, uu]:
                depth[vv, uu] = z
                index[vv, uu] = i
    rgb = np.zeros((H, W, 3), dtype=np.float32)
    rgb[index >= 0] = scene.colors[index[index >= 0]]
    depth[index < 0] = 0
    return rgb, depth


def cloud(n, seed=0, spread=30.0, z0=60.0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-spread, spread, (n, 3)) + [0, 0, z0]
    return PointCloudScene(pos, rng.uniform(0, 1, (n, 3)))


def test_single_point_on_axis():
    scene = PointCloudScene([[0, 0, 100.0]], [[0.2, 0.4, 0.6]])
    img = render(scene, Pose.identity(), INTR, splat_radius=0)
    assert img.hit.sum() == 1
    v, u = round(INTR.cy), round(INTR.cx)
    assert img.depth[v, u] == 100.0
    assert np.allclose(img.rgb[v, u], [0.2, 0.4, 0.6])


def test_point_behind_camera_is_culled():
    img = render(PointCloudScene([[0, 0, -5.0]], [[1, 1, 1]]), Pose.identity(), INTR, 1)
    assert not img.hit.any() and not img.rgb.any()


def test_empty_scene_renders_background():
    img = render(PointCloudScene(np.zeros((0, 3)), np.zeros((0, 3))), Pose.identity(), INTR)
    assert img.coverage() == 0.0


def test_nearest_point_wins():
    scene = PointCloudScene([[0, 0, 80.0], [0, 0, 50.0]], [[1, 0, 0], [0, 1, 0]])
    img = render(scene, Pose.identity(), INTR, splat_radius=0)
    v, u = round(INTR.cy), round(INTR.cx)
    assert img.depth[v, u] == 50.0 and np.array_equal(img.rgb[v, u], [0, 1, 0])


def test_projection_offset_pixel():
    # x = 10, z = 100 lands fx * 0.1 pixels right of centre
    scene = PointCloudScene([[10.0, -5.0, 100.0]], [[1, 1, 1]])
    img = render(scene, Pose.identity(), INTR, 0)
    u = math.floor(INTR.fx * 0.1 + INTR.cx + 0.5)
    v = math.floor(INTR.fy * -0.05 + INTR.cy + 0.5)
    assert img.depth[v, u] == 100.0 and img.hit.sum() == 1


def test_splat_disc_shape():
    offs = splat_offsets(1)
    assert tuple(offs[0]) == (0, 0) and len(offs) == 5
    assert len(splat_offsets(2)) == 13


@pytest.mark.parametrize("radius", [0, 1, 2])
def test_kernel_matches_reference(radius):
    scene = cloud(3000, seed=radius)
    pose = euler_to_pose(EulerPose(2, -1, 5, 0.1, -0.05, 0.3))
    img = render(scene, pose, INTR, radius)
    rgb, depth = reference_render(scene, pose, INTR, radius)
    # the oracle's matmul sums in a different order, so depths agree to a few ulps
    assert np.array_equal(img.hit, depth > 0)
    assert np.allclose(img.depth, depth, rtol=0, atol=1e-12)
    assert np.array_equal(img.rgb, rgb)


def test_rgbd_invariants():
    img = render(cloud(5000), Pose.identity(), INTR)
    assert np.all(np.isfinite(img.rgb)) and img.rgb.min() >= 0 and img.rgb.max() <= 1
    assert np.all(img.depth >= 0)
    assert not img.rgb[~img.hit].any()


def test_render_is_pure():
    scene = cloud(2000)
    pose = euler_to_pose(EulerPose(1, 2, 3, 0.1, 0.2, 0.3))
    assert render(scene, pose, INTR).equals(render(scene, pose, INTR))


def test_larger_splat_never_increases_depth():
    scene = cloud(2000, seed=3)
    a = render(scene, Pose.identity(), INTR, 1)
    b = render(scene, Pose.identity(), INTR, 2)
    both = a.hit & b.hit
    assert np.all(b.depth[both] <= a.depth[both])
    assert np.all(b.hit[a.hit])


def test_frame_invariance():
    scene = cloud(2000, seed=4)
    pose = euler_to_pose(EulerPose(0.5, -0.3, 2.0, 0.05, 0.1, -0.2))
    off = np.array([0.25, -0.5, 0.125])  # dyadic offsets keep the subtraction exact
    a = render(scene, pose, INTR)
    b = render(scene.translated(off), Pose(pose.rotation, pose.translation + off), INTR)
    assert np.allclose(a.depth, b.depth, atol=1e-9)
    assert np.array_equal(a.rgb, b.rgb)


def test_backprojection_round_trip():
    rng = np.random.default_rng(5)
    n = 100_000
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pos = d * rng.uniform(40, 50, (n, 1))
    scene = PointCloudScene(pos, rng.uniform(0, 1, (n, 3)))
    intr = CameraIntrinsics.default(160, 128)
    radius = 1
    tree = cKDTree(pos)
    for pose in (Pose.identity(), euler_to_pose(EulerPose(3, -2, 1, 0.4, -0.3, 0.2))):
        img = render(scene, pose, intr, radius)
        world = backproject(img, pose, intr)
        assert len(world) > 0.5 * intr.width * intr.height
        v, u = np.nonzero(img.hit)
        z = img.depth[v, u]
        # pixel centre rounding contributes half a pixel diagonal on top of the splat radius
        tol = (radius + math.sqrt(0.5)) * z / min(intr.fx, intr.fy) + 1e-9
        dist, _ = tree.query(world)
        assert np.all(dist <= tol)


def test_batch_equals_sequential():
    scenes = [cloud(1500, seed=s) for s in range(3)]
    rng = np.random.default_rng(6)
    reqs = [(scenes[i % 3], euler_to_pose(EulerPose(*rng.uniform(-3, 3, 3), *rng.uniform(-0.3, 0.3, 3)))) for i in range(10)]
    seq = [render(s, p, INTR) for s, p in reqs]
    par = render_batch(reqs, INTR, workers=4)
    assert all(a.equals(b) for a, b in zip(seq, par))
    assert render_batch(reqs[:1], INTR)[0].equals(seq[0])
    same = render_batch([reqs[0]] * 8, INTR, workers=3)
    assert all(x.equals(same[0]) for x in same)
    with pytest.raises(ValueError):
        render_batch([], INTR)


def test_downscale_rules():
    img = render(cloud(4000), Pose.identity(), INTR)
    assert downscale(img, 40, 32).equals(img)
    flat = RGBDImage(np.full((8, 8, 3), 0.25, np.float32), np.full((8, 8), 7.0))
    half = downscale(flat, 4, 4)
    assert np.allclose(half.rgb, 0.25) and np.all(half.depth == 7.0)
    block = RGBDImage(np.zeros((2, 2, 3), np.float32), np.array([[0.0, 0.0], [40.0, 60.0]]))
    assert downscale(block, 1, 1).depth[0, 0] == 40.0
    empty = RGBDImage(np.zeros((2, 2, 3), np.float32), np.zeros((2, 2)))
    assert downscale(empty, 1, 1).depth[0, 0] == 0.0
    with pytest.raises(ValueError):
        downscale(img, 80, 32)


def test_downscale_matches_loop_oracle():
    rng = np.random.default_rng(7)
    rgb = rng.uniform(0, 1, (13, 17, 3)).astype(np.float32)
    depth = np.where(rng.uniform(size=(13, 17)) < 0.5, 0.0, rng.uniform(1, 100, (13, 17)))
    out = downscale(RGBDImage(rgb, depth), 5, 4)
    for i in range(4):
        for j in range(5):
            r = slice(i * 13 // 4, (i + 1) * 13 // 4)
            c = slice(j * 17 // 5, (j + 1) * 17 // 5)
            assert np.allclose(out.rgb[i, j], rgb[r, c].reshape(-1, 3).mean(axis=0), atol=1e-6)
            nz = depth[r, c][depth[r, c] > 0]
            assert out.depth[i, j] == (nz.min() if len(nz) else 0.0)


def test_scene_file_round_trip(tmp_path):
    scene = PointCloudScene(cloud(100).positions.astype(np.float32), cloud(100).colors, landmarks=[[1, 2, 3, 4]])
    write_scene(tmp_path / "s.scene", scene)
    back = read_scene(tmp_path / "s.scene")
    assert np.array_equal(back.positions, scene.positions) and np.array_equal(back.colors, scene.colors)
    assert np.array_equal(back.landmarks, scene.landmarks) and back.name == "s"
    raw = (tmp_path / "s.scene").read_bytes()
    (tmp_path / "t.scene").write_bytes(raw[:-4])
    with pytest.raises(SceneFormatError):
        read_scene(tmp_path / "t.scene")
    (tmp_path / "u.scene").write_bytes(b"NOPE\nend_header\n")
    with pytest.raises(SceneFormatError):
        read_scene(tmp_path / "u.scene")


def test_scene_validation():
    with pytest.raises(ValueError):
        PointCloudScene([[0, 0, np.nan]], [[0, 0, 0]])
    with pytest.raises(ValueError):
        PointCloudScene([[0, 0, 0]], [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(ValueError):
        CameraIntrinsics(100, 100, 50, 10, 40, 32)


def test_preview_export(tmp_path):
    img = render(cloud(3000), Pose.identity(), INTR)
    write_ppm(tmp_path / "a.ppm", img)
    write_depth_pgm(tmp_path / "a.pgm", img)
    rgb = read_pnm(tmp_path / "a.ppm")
    assert rgb.shape == (32, 40, 3) and np.array_equal(rgb, np.rint(img.rgb * 255).astype(np.uint8))
    d = read_pnm(tmp_path / "a.pgm")
    assert np.array_equal(d.astype(float), np.clip(np.rint(img.depth), 0, 65535))
