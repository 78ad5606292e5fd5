"""Pinhole projection and a z-buffer software rasterizer.

Image-space conventions (fixed and relied on by tests):

* Camera space: x right, y up, z out of the camera; only z > 0 is visible.
* Projection: u = focal * x / z + cx, v = cy - focal * y / z (raster y grows
  downward); depth is the camera-space z.
* Pixel (x, y) samples the scene at continuous image coordinates (x, y).
* Coverage: a sample is lit when all three edge functions are positive, or
  zero on an edge that is "top" (horizontal, pointing +x) or "left" (pointing
  -y), with triangles rewound to positive signed area first.  Shared edges are
  therefore covered exactly once.
* Depth and color are interpolated with screen-space barycentric weights; the
  z-buffer keeps the strictly nearer fragment, so depth ties go to the
  lower-index triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: focal length and principal point in pixels."""

    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class RenderOutput:
    """Rendered color in [0,1], per-pixel depth (+inf empty), and face mask."""

    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W), +inf where no triangle covers the pixel
    face_mask: np.ndarray  # (H, W) uint8, 1 exactly where depth is finite


def project_perspective(vertices, camera: Camera):
    """Project camera-space points to (u, v, depth) rows.

    Returns (points, clipped): rows of `points` for clipped vertices (z <= 0
    or non-finite input) are NaN, and `clipped` flags them.  Triangles that
    touch a clipped vertex are dropped by the rasterizer.
    """
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    z = v[:, 2]
    clipped = ~(np.isfinite(v).all(axis=1) & (z > 0))
    out = np.empty_like(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, 0] = camera.focal * v[:, 0] / z + camera.cx
        out[:, 1] = camera.cy - camera.focal * v[:, 1] / z
    out[:, 2] = z
    out[clipped] = np.nan
    return out, clipped


def _edge(ax, ay, bx, by, px, py):
    """Signed area edge function; positive when p is on the interior side."""
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _include_on_edge(ax, ay, bx, by):
    """Tie rule for samples exactly on edge a->b (positive-area winding)."""
    dx = bx - ax
    dy = by - ay
    return (dy == 0 and dx > 0) or dy < 0


def rasterize(vertices, colors, triangles, camera: Camera) -> RenderOutput:
    """Render a camera-space mesh with flat per-vertex albedo.

    vertices: (N, 3) camera-space positions; colors: (N, 3) RGB per vertex;
    triangles: (M, 3) vertex indices.  An empty mesh yields black color, an
    all-zero mask, and +inf depth.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if colors.shape[0] != vertices.shape[0]:
        raise ValueError(
            f"got {colors.shape[0]} vertex colors for {vertices.shape[0]} vertices"
        )
    if triangles.size and (triangles.min() < 0 or triangles.max() >= vertices.shape[0]):
        raise ValueError("triangle indices out of range")

    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3))
    pts, clipped = project_perspective(vertices, camera)

    for tri in triangles:
        if clipped[tri].any():
            continue
        p = pts[tri]
        c = colors[tri]
        area = _edge(p[0, 0], p[0, 1], p[1, 0], p[1, 1], p[2, 0], p[2, 1])
        if area == 0:
            continue
        if area < 0:
            p = p[[0, 2, 1]]
            c = c[[0, 2, 1]]
            area = -area

        x0 = max(int(np.ceil(p[:, 0].min())), 0)
        x1 = min(int(np.floor(p[:, 0].max())), w - 1)
        y0 = max(int(np.ceil(p[:, 1].min())), 0)
        y1 = min(int(np.floor(p[:, 1].max())), h - 1)
        if x0 > x1 or y0 > y1:
            continue

        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        px, py = np.meshgrid(xs, ys)

        inside = np.ones(px.shape, dtype=bool)
        weights = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            wv = _edge(p[a, 0], p[a, 1], p[b, 0], p[b, 1], px, py)
            if _include_on_edge(p[a, 0], p[a, 1], p[b, 0], p[b, 1]):
                inside &= wv >= 0
            else:
                inside &= wv > 0
            weights.append(wv)
        if not inside.any():
            continue

        w0, w1, w2 = weights
        z = (w0 * p[0, 2] + w1 * p[1, 2] + w2 * p[2, 2]) / area
        tile = depth[y0 : y1 + 1, x0 : x1 + 1]
        update = inside & (z < tile)
        if not update.any():
            continue
        tile[update] = z[update]
        rgb = (
            w0[..., None] * c[0] + w1[..., None] * c[1] + w2[..., None] * c[2]
        ) / area
        color[y0 : y1 + 1, x0 : x1 + 1][update] = np.clip(rgb[update], 0.0, 1.0)

    face_mask = np.isfinite(depth).astype(np.uint8)
    return RenderOutput(color=color, depth=depth, face_mask=face_mask)
