"""Point-cloud RGB-D rendering with a pinhole camera and z-buffered splats.

Scene files start with a short text header and end with little-endian
float32 records ``x y z r g b``::

    SCOPESCENE 1
    points <N>
    bounds <xmin> <ymin> <zmin> <xmax> <ymax> <zmax>
    end_header
    <N * 24 bytes>
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .geometry import Pose

NEAR_PLANE = 0.1
MAGIC = "SCOPESCENE 1"


@dataclass(frozen=True, eq=False)
class PointCloudScene:
    positions: np.ndarray
    colors: np.ndarray
    name: str = ""
    # optional (K, 4) rows of landmark centre x, y, z and radius, mm
    landmarks: np.ndarray | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.ascontiguousarray(self.colors, dtype=np.float32).reshape(-1, 3)
        if len(pos) != len(col):
            raise ValueError("positions and colors differ in length")
        if not np.all(np.isfinite(pos)):
            raise ValueError("scene has non-finite coordinates")
        col = np.clip(col, 0.0, 1.0)
        pos.setflags(write=False)
        col.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        if self.landmarks is not None:
            lm = np.array(self.landmarks, dtype=np.float64).reshape(-1, 4)
            lm.setflags(write=False)
            object.__setattr__(self, "landmarks", lm)

    def __len__(self):
        return len(self.positions)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.positions) == 0:
            return np.zeros(3), np.zeros(3)
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def translated(self, offset) -> "PointCloudScene":
        off = np.asarray(offset, dtype=np.float64)
        lm = None
        if self.landmarks is not None:
            lm = self.landmarks.copy()
            lm[:, :3] += off
        return PointCloudScene(self.positions + off, self.colors, self.name, lm)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int = 160, height: int = 128) -> "CameraIntrinsics":
        """fx = fy = 175 px at 160x128, scaled with the width; centred principal point."""
        f = 175.0 * width / 160.0
        return cls(f, f, width / 2.0, height / 2.0, int(width), int(height))

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, int(width), int(height))


@dataclass(frozen=True, eq=False)
class RGBDImage:
    """rgb in [0, 1] of shape (H, W, 3); depth in mm of shape (H, W), 0 where nothing was hit."""

    rgb: np.ndarray
    depth: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def hit(self) -> np.ndarray:
        return self.depth > 0

    def coverage(self) -> float:
        return float(self.hit.mean())

    def without_depth(self) -> "RGBDImage":
        return RGBDImage(self.rgb, np.zeros_like(self.depth))

    def to_array(self, depth_scale: float = 50.0) -> np.ndarray:
        """Channels-first float32 (4, H, W) with depth divided by ``depth_scale`` mm."""
        out = np.empty((4, *self.depth.shape), dtype=np.float32)
        out[:3] = np.moveaxis(self.rgb, -1, 0)
        out[3] = self.depth / depth_scale
        return out

    def equals(self, other: "RGBDImage") -> bool:
        return bool(np.array_equal(self.rgb, other.rgb) and np.array_equal(self.depth, other.depth))


def splat_offsets(radius: int) -> np.ndarray:
    """Integer pixel offsets of a disc, centre first."""
    r = int(radius)
    offs = [(0, 0)] + [(du, dv) for dv in range(-r, r + 1) for du in range(-r, r + 1) if (du or dv) and du * du + dv * dv <= r * r]
    return np.array(offs, dtype=np.int64).reshape(-1, 2)


@numba.njit(cache=True, nogil=True)
def _zbuffer(pts, R, t, fx, fy, cx, cy, width, height, offs, near, depth, index):
    n = pts.shape[0]
    for i in range(n):
        px = pts[i, 0] - t[0]
        py = pts[i, 1] - t[1]
        pz = pts[i, 2] - t[2]
        # camera coordinates: R^T (p - t)
        z = R[0, 2] * px + R[1, 2] * py + R[2, 2] * pz
        if z <= near:
            continue
        x = R[0, 0] * px + R[1, 0] * py + R[2, 0] * pz
        y = R[0, 1] * px + R[1, 1] * py + R[2, 1] * pz
        u = fx * x / z + cx
        v = fy * y / z + cy
        if not (u > -1e6 and u < 1e6 and v > -1e6 and v < 1e6):
            continue
        ui = int(math.floor(u + 0.5))
        vi = int(math.floor(v + 0.5))
        if ui < 0 or ui >= width or vi < 0 or vi >= height:
            continue
        for k in range(offs.shape[0]):
            uu = ui + offs[k, 0]
            vv = vi + offs[k, 1]
            if uu < 0 or uu >= width or vv < 0 or vv >= height:
                continue
            if z < depth[vv, uu]:
                depth[vv, uu] = z
                index[vv, uu] = i


def render(scene: PointCloudScene, pose: Pose, intrinsics: CameraIntrinsics, splat_radius: int = 1) -> RGBDImage:
    """Render ``scene`` seen from camera ``pose`` (camera-to-world).

    Points at or behind the 0.1 mm near plane or projecting outside the
    image are dropped; each remaining point paints a disc of
    ``splat_radius`` pixels and the nearest depth wins per pixel (first
    point on exact ties).
    """
    H, W = intrinsics.height, intrinsics.width
    depth = np.full((H, W), np.inf)
    index = np.full((H, W), -1, dtype=np.int64)
    if len(scene):
        _zbuffer(scene.positions, np.ascontiguousarray(pose.rotation), np.ascontiguousarray(pose.translation),
                 float(intrinsics.fx), float(intrinsics.fy),
                 float(intrinsics.cx), float(intrinsics.cy), W, H, splat_offsets(splat_radius), NEAR_PLANE, depth, index)
    hit = index >= 0
    rgb = np.zeros((H, W, 3), dtype=np.float32)
    rgb[hit] = scene.colors[index[hit]]
    depth[~hit] = 0.0
    return RGBDImage(rgb, depth)


def render_batch(requests, intrinsics: CameraIntrinsics, splat_radius: int = 1, workers: int = 1) -> list[RGBDImage]:
    """Render ``(scene, pose)`` pairs; results are in request order whatever ``workers`` is."""
    requests = list(requests)
    if not requests:
        raise ValueError("empty render batch")
    job = lambda sp: render(sp[0], sp[1], intrinsics, splat_radius)  # noqa: E731
    if workers <= 1:
        return [job(r) for r in requests]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, requests))


def downscale(img: RGBDImage, out_w: int, out_h: int) -> RGBDImage:
    """Shrink an image by area averaging of colour and min-pooling of depth.

    Output pixel (i, j) covers source rows ``floor(i H / out_h)`` up to
    ``floor((i + 1) H / out_h)`` (columns likewise). Depth is the smallest
    non-zero depth in the block, or 0 when the block holds only background.
    """
    H, W = img.depth.shape
    if out_w > W or out_h > H or out_w < 1 or out_h < 1:
        raise ValueError(f"cannot downscale {W}x{H} to {out_w}x{out_h}")
    r0 = (np.arange(out_h) * H) // out_h
    c0 = (np.arange(out_w) * W) // out_w
    nr = np.diff(np.append(r0, H))
    nc = np.diff(np.append(c0, W))
    rgb = np.add.reduceat(np.add.reduceat(img.rgb.astype(np.float64), r0, axis=0), c0, axis=1)
    rgb /= (nr[:, None] * nc[None, :])[..., None]
    d = np.where(img.depth > 0, img.depth, np.inf)
    d = np.minimum.reduceat(np.minimum.reduceat(d, r0, axis=0), c0, axis=1)
    return RGBDImage(rgb.astype(np.float32), np.where(np.isfinite(d), d, 0.0))


def backproject(img: RGBDImage, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """World coordinates of every hit pixel centre, shape (K, 3)."""
    v, u = np.nonzero(img.depth > 0)
    z = img.depth[v, u].astype(np.float64)
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    cam = np.stack([x, y, z], axis=1)
    return cam @ pose.rotation.T + pose.translation


# --- persistence -------------------------------------------------------------

def write_scene(path, scene: PointCloudScene) -> None:
    lo, hi = scene.bounds
    header = (
        f"{MAGIC}\npoints {len(scene)}\n"
        f"bounds {' '.join(repr(float(v)) for v in (*lo, *hi))}\n"
    )
    if scene.landmarks is not None:
        for row in scene.landmarks:
            header += f"landmark {' '.join(repr(float(v)) for v in row)}\n"
    header += "end_header\n"
    rec = np.empty((len(scene), 6), dtype="<f4")
    rec[:, :3] = scene.positions
    rec[:, 3:] = scene.colors
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())


class SceneFormatError(ValueError):
    pass


def read_scene(path, name: str | None = None) -> PointCloudScene:
    data = Path(path).read_bytes()
    lines = []
    pos = 0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise SceneFormatError(f"{path}: truncated header")
        line = data[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        if line == "end_header":
            break
        lines.append(line)
        if len(lines) > 4096:
            raise SceneFormatError(f"{path}: header too long")
    if not lines or lines[0] != MAGIC:
        raise SceneFormatError(f"{path}: not a {MAGIC} file")
    fields = {}
    landmarks = []
    for line in lines[1:]:
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key == "landmark":
            landmarks.append([float(v) for v in rest.split()])
        else:
            fields[key] = rest
    try:
        n = int(fields["points"])
    except (KeyError, ValueError):
        raise SceneFormatError(f"{path}: missing point count") from None
    body = data[pos:]
    if len(body) != n * 24:
        raise SceneFormatError(f"{path}: expected {n * 24} data bytes, found {len(body)}")
    rec = np.frombuffer(body, dtype="<f4").reshape(n, 6)
    return PointCloudScene(
        rec[:, :3].astype(np.float64), rec[:, 3:], name if name is not None else Path(path).stem,
        np.array(landmarks) if landmarks else None,
    )


def write_ppm(path, img: RGBDImage) -> None:
    H, W = img.depth.shape
    rgb8 = np.clip(np.rint(img.rgb * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        fh.write(rgb8.tobytes())


def write_depth_pgm(path, img: RGBDImage) -> None:
    """16-bit binary graymap of depth in mm (big-endian as the format requires)."""
    H, W = img.depth.shape
    d = np.clip(np.rint(img.depth), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n65535\n".encode("ascii"))
        fh.write(d.tobytes())


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1
    magic, W, H, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P6":
        return np.frombuffer(data[pos:], dtype=np.uint8).reshape(H, W, 3)
    dt = ">u2" if maxval > 255 else np.uint8
    return np.frombuffer(data[pos:], dtype=dt).reshape(H, W)
