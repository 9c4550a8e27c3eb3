"""Depth-buffer views of a mesh from cameras spread over a viewing sphere.

Each view is an orthographic projection along ``-d`` for a unit direction
``d``. The view volume is ``[-1, 1]^3`` in camera coordinates, so a
pose-normalized mesh always fits. A pixel stores ``(1 + z) / 2`` for the
surface point nearest the camera (``z`` measured along ``d``), and 0 where
no triangle covers the pixel centre.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


DEFAULT_RESOLUTION = 72


@dataclass(frozen=True)
class CameraRig:
    azimuth_count: int
    elevation_count: int
    directions: np.ndarray

    @property
    def n_views(self):
        return self.azimuth_count * self.elevation_count

    def angles(self):
        """``(azimuth, elevation)`` pairs in degrees, in view order."""
        az = np.arange(self.azimuth_count) * 360.0 / self.azimuth_count
        el = -90.0 + (np.arange(self.elevation_count) + 0.5) * 180.0 / self.elevation_count
        return [(a, e) for e in el for a in az]


def make_rig(azimuth_count=8, elevation_count=8):
    """Grid of view directions: equally spaced azimuths, half-offset elevations.

    Views are ordered elevation-major (all azimuths of the lowest ring first).
    The half offset keeps every view off the poles.
    """
    if int(azimuth_count) < 1 or int(elevation_count) < 1:
        raise ValueError("azimuth_count and elevation_count must be >= 1")
    azimuth_count, elevation_count = int(azimuth_count), int(elevation_count)
    phi = np.deg2rad(np.arange(azimuth_count) * 360.0 / azimuth_count)
    theta = np.deg2rad(-90.0 + (np.arange(elevation_count) + 0.5) * 180.0 / elevation_count)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    directions = np.stack(
        [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)], axis=-1
    ).reshape(-1, 3)
    directions.setflags(write=False)
    return CameraRig(azimuth_count, elevation_count, directions)


@dataclass(frozen=True)
class DepthImage:
    pixels: np.ndarray
    view_index: int = 0

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ViewSet:
    model_id: str
    images: tuple

    def __post_init__(self):
        for k, image in enumerate(self.images):
            if image.view_index != k:
                raise ValueError("view indices must run 0..Np-1 in order")

    def __len__(self):
        return len(self.images)

    def to_array(self):
        """Stack of pixel arrays, shape ``(Np, height, width)``."""
        return np.stack([im.pixels for im in self.images])

    @classmethod
    def from_array(cls, model_id, stack):
        stack = np.asarray(stack, dtype=np.float64)
        return cls(model_id, tuple(DepthImage(stack[k], k) for k in range(len(stack))))


def camera_basis(direction):
    """Right/up/back unit vectors for a camera looking along ``-direction``.

    Up is the global +z axis unless the view is within ~8 degrees of a pole,
    then +x.
    """
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    up = np.array([0.0, 0.0, 1.0]) if abs(d[2]) <= 0.99 else np.array([1.0, 0.0, 0.0])
    forward = -d
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    return right, cam_up, d


def _is_top_left(ex, ey):
    # counter-clockwise winding in a y-up frame: top edges run right-to-left,
    # left edges run downward
    return ((ey == 0) & (ex < 0)) | (ey < 0)


def rasterize_depth(tri_xy, tri_z, resolution):
    """Z-buffer rasterization of screen-space triangles.

    ``tri_xy`` has shape ``(T, 3, 2)`` in ``[-1, 1]`` (y up), ``tri_z`` has
    shape ``(T, 3)``. Returns a ``(resolution, resolution)`` array of the
    largest interpolated z per covered pixel centre and ``-inf`` elsewhere.
    """
    res = int(resolution)
    zbuf = np.full(res * res, -np.inf)
    if len(tri_xy) == 0:
        return zbuf.reshape(res, res)

    # pixel (row, col) centre sits at x = -1 + (col + .5) * 2/res, y = 1 - (row + .5) * 2/res
    px = (tri_xy[..., 0] + 1.0) * res / 2.0 - 0.5
    py = (1.0 - tri_xy[..., 1]) * res / 2.0 - 0.5
    # work in (col, -row) so that the y-up winding rules apply
    ax, ay = px[:, 0], -py[:, 0]
    bx, by = px[:, 1], -py[:, 1]
    cx, cy = px[:, 2], -py[:, 2]
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    keep = area != 0
    flip = area < 0
    # enforce counter-clockwise order by swapping b and c
    bx, cx = np.where(flip, cx, bx), np.where(flip, bx, cx)
    by, cy = np.where(flip, cy, by), np.where(flip, by, cy)
    zb, zc = np.where(flip, tri_z[:, 2], tri_z[:, 1]), np.where(flip, tri_z[:, 1], tri_z[:, 2])
    za = tri_z[:, 0]
    area = np.abs(area)

    col0 = np.clip(np.ceil(np.minimum(np.minimum(ax, bx), cx)), 0, res)
    col1 = np.clip(np.floor(np.maximum(np.maximum(ax, bx), cx)), -1, res - 1)
    row0 = np.clip(np.ceil(-np.maximum(np.maximum(ay, by), cy)), 0, res)
    row1 = np.clip(np.floor(-np.minimum(np.minimum(ay, by), cy)), -1, res - 1)
    width = (col1 - col0 + 1).astype(np.int64)
    height = (row1 - row0 + 1).astype(np.int64)
    keep &= (width > 0) & (height > 0)
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        return zbuf.reshape(res, res)

    counts = width[idx] * height[idx]
    tri = np.repeat(idx, counts)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(counts.sum()) - offsets
    w = width[tri]
    col = col0[tri].astype(np.int64) + local % w
    row = row0[tri].astype(np.int64) + local // w
    x = col.astype(np.float64)
    y = -row.astype(np.float64)

    def edge(x0, y0, x1, y1):
        e = (x1[tri] - x0[tri]) * (y - y0[tri]) - (y1[tri] - y0[tri]) * (x - x0[tri])
        tl = _is_top_left(x1[tri] - x0[tri], y1[tri] - y0[tri])
        return e, (e > 0) | ((e == 0) & tl)

    w_a, in_a = edge(bx, by, cx, cy)
    w_b, in_b = edge(cx, cy, ax, ay)
    w_c, in_c = edge(ax, ay, bx, by)
    inside = in_a & in_b & in_c
    tri, row, col = tri[inside], row[inside], col[inside]
    a = area[tri]
    z = (w_a[inside] * za[tri] + w_b[inside] * zb[tri] + w_c[inside] * zc[tri]) / a
    np.maximum.at(zbuf, row * res + col, z)
    return zbuf.reshape(res, res)


def render_view(mesh, direction, resolution=DEFAULT_RESOLUTION):
    """Single depth image of ``mesh`` seen from ``direction``."""
    right, up, back = camera_basis(direction)
    tri = mesh.triangles()
    tri_xy = np.stack([tri @ right, tri @ up], axis=-1)
    tri_z = tri @ back
    zbuf = rasterize_depth(tri_xy, tri_z, resolution)
    covered = np.isfinite(zbuf)
    pixels = np.zeros_like(zbuf)
    pixels[covered] = np.clip((1.0 + zbuf[covered]) / 2.0, 0.0, 1.0)
    return pixels


def render_depth(mesh, rig=None, resolution=DEFAULT_RESOLUTION):
    """Render the full view set of a pose-normalized mesh.

    Parameters
    ----------
    mesh : TriangleMesh
        Should already be normalized (max vertex norm <= 1).
    rig : CameraRig, optional
        Defaults to the 8 x 8 rig (64 views).
    resolution : int
        Side length of each square image.
    """
    if rig is None:
        rig = make_rig()
    radius = np.sqrt((mesh.vertices ** 2).sum(axis=1)).max()
    if radius > 1.0 + 1e-6:
        raise ValueError(f"mesh is not pose-normalized (max vertex norm {radius:.6g} > 1)")
    images = tuple(
        DepthImage(render_view(mesh, d, resolution), k) for k, d in enumerate(rig.directions)
    )
    return ViewSet(mesh.id, images)


def write_pgm(path, pixels):
    """Binary greyscale PGM (P5, maxval 255)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    return data.reshape(h, w).astype(np.float64) / maxval
