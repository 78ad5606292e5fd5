import numpy as np
import pytest

from talkingface.rasterizer import Camera, RenderOutput, project_perspective, rasterize


# ---------------------------------------------------------------------------
# independent per-pixel oracle implementing the documented conventions


def project_oracle(point, cam):
    x, y, z = point
    return (cam.focal * x / z + cam.cx, cam.cy - cam.focal * y / z, z)


def lit_pixels_oracle(tri_uv, cam):
    """Half-space scan over every pixel, scalar math only."""
    (x0, y0), (x1, y1), (x2, y2) = tri_uv
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area == 0:
        return set()
    if area < 0:
        (x1, y1), (x2, y2) = (x2, y2), (x1, y1)
        area = -area
    edges = [((x1, y1), (x2, y2)), ((x2, y2), (x0, y0)), ((x0, y0), (x1, y1))]
    lit = set()
    for py in range(cam.height):
        for px in range(cam.width):
            ok = True
            for (ax, ay), (bx, by) in edges:
                val = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if val > 0:
                    continue
                if val < 0:
                    ok = False
                    break
                dx, dy = bx - ax, by - ay
                if not ((dy == 0 and dx > 0) or dy < 0):
                    ok = False
                    break
            if ok:
                lit.add((px, py))
    return lit


def mask_to_set(mask):
    ys, xs = np.nonzero(mask)
    return set(zip(xs.tolist(), ys.tolist()))


def screen_triangle(tri_uv, z, cam):
    """Lift 2D screen-space vertices to camera space at constant depth z."""
    verts = []
    for u, v in tri_uv:
        x = (u - cam.cx) * z / cam.focal
        y = (cam.cy - v) * z / cam.focal
        verts.append((x, y, z))
    return np.array(verts)


# ---------------------------------------------------------------------------
# projection


def test_optical_axis_point():
    cam = Camera(focal=100.0, cx=32.0, cy=32.0, width=64, height=64)
    pts, clipped = project_perspective([[0.0, 0.0, 1.0]], cam)
    assert not clipped[0]
    np.testing.assert_array_equal(pts[0], [32.0, 32.0, 1.0])


def test_pinhole_offset_halves_with_depth():
    cam = Camera(focal=100.0, cx=32.0, cy=32.0, width=64, height=64)
    pts, _ = project_perspective([[1.0, 0.0, 2.0], [1.0, 0.0, 4.0]], cam)
    assert pts[0, 0] - cam.cx == pytest.approx(2 * (pts[1, 0] - cam.cx))


def test_projection_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    cam = Camera(focal=75.0, cx=31.0, cy=30.0, width=64, height=64)
    cloud = np.column_stack(
        [rng.normal(size=50), rng.normal(size=50), rng.uniform(0.5, 5.0, size=50)]
    )
    pts, clipped = project_perspective(cloud, cam)
    assert not clipped.any()
    for i in range(50):
        u, v, z = project_oracle(cloud[i], cam)
        assert abs(pts[i, 0] - u) < 1e-9
        assert abs(pts[i, 1] - v) < 1e-9
        assert pts[i, 2] == z


def test_nonpositive_z_is_clipped():
    cam = Camera(focal=100.0, cx=8.0, cy=8.0, width=16, height=16)
    pts, clipped = project_perspective(
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]], cam
    )
    np.testing.assert_array_equal(clipped, [False, True, True])
    assert np.isnan(pts[1]).all() and np.isnan(pts[2]).all()


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(focal=0.0, cx=1.0, cy=1.0, width=4, height=4)
    with pytest.raises(ValueError):
        Camera(focal=1.0, cx=9.0, cy=1.0, width=4, height=4)


# ---------------------------------------------------------------------------
# rasterization


def test_empty_mesh_renders_blank():
    cam = Camera(focal=10.0, cx=4.0, cy=4.0, width=8, height=8)
    out = rasterize(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=int), cam
    )
    assert out.face_mask.sum() == 0
    assert (out.color == 0).all()
    assert np.isinf(out.depth).all()


def test_lower_left_half_triangle_matches_oracle():
    cam = Camera(focal=10.0, cx=2.0, cy=2.0, width=4, height=4)
    tri_uv = [(0.0, 0.0), (0.0, 4.0), (4.0, 4.0)]  # lower-left half (y down)
    verts = screen_triangle(tri_uv, 1.0, cam)
    out = rasterize(verts, np.ones((3, 3)), [[0, 1, 2]], cam)
    assert mask_to_set(out.face_mask) == lit_pixels_oracle(tri_uv, cam)
    assert out.face_mask.sum() > 0


def test_random_triangles_match_oracle():
    rng = np.random.default_rng(1)
    cam = Camera(focal=20.0, cx=8.0, cy=8.0, width=16, height=16)
    for _ in range(50):
        tri_uv = [tuple(rng.uniform(-2, 18, size=2)) for _ in range(3)]
        verts = screen_triangle(tri_uv, float(rng.uniform(0.5, 3.0)), cam)
        out = rasterize(verts, rng.random((3, 3)), [[0, 1, 2]], cam)
        assert mask_to_set(out.face_mask) == lit_pixels_oracle(tri_uv, cam)


def test_zbuffer_keeps_nearer_triangle():
    cam = Camera(focal=10.0, cx=4.0, cy=4.0, width=8, height=8)
    big = [(-20.0, -20.0), (40.0, -20.0), (-20.0, 40.0)]
    near = screen_triangle(big, 1.0, cam)
    far = screen_triangle(big, 2.0, cam)
    verts = np.vstack([near, far])
    colors = np.array([[1, 0, 0]] * 3 + [[0, 0, 1]] * 3, dtype=float)
    # submit far triangle first; the near red one must win everywhere
    out = rasterize(verts, colors, [[3, 4, 5], [0, 1, 2]], cam)
    assert out.face_mask.all()
    np.testing.assert_array_equal(out.color[..., 0], np.ones((8, 8)))
    np.testing.assert_array_equal(out.color[..., 2], np.zeros((8, 8)))


def test_triangles_touching_clipped_vertices_are_dropped():
    cam = Camera(focal=10.0, cx=4.0, cy=4.0, width=8, height=8)
    verts = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, -1.0]])
    out = rasterize(verts, np.ones((3, 3)), [[0, 1, 2]], cam)
    assert out.face_mask.sum() == 0


def test_mask_equals_finite_depth_on_random_scenes():
    rng = np.random.default_rng(2)
    cam = Camera(focal=16.0, cx=8.0, cy=8.0, width=16, height=16)
    for _ in range(10):
        n = 12
        verts = np.column_stack(
            [rng.normal(0, 0.6, n), rng.normal(0, 0.6, n), rng.uniform(0.8, 2.0, n)]
        )
        tris = rng.integers(0, n, size=(8, 3))
        out = rasterize(verts, rng.random((n, 3)), tris, cam)
        np.testing.assert_array_equal(out.face_mask, np.isfinite(out.depth))
        # background stays black
        assert (out.color[out.face_mask == 0] == 0).all()


def test_submission_order_invariance():
    rng = np.random.default_rng(3)
    cam = Camera(focal=16.0, cx=8.0, cy=8.0, width=16, height=16)
    n = 9
    verts = np.column_stack(
        [rng.normal(0, 0.5, n), rng.normal(0, 0.5, n), rng.uniform(0.8, 1.0, n)]
    )
    # push triangles to distinct depth bands so no coincident depths occur
    verts[:3, 2] += 0.0
    verts[3:6, 2] += 1.0
    verts[6:, 2] += 2.0
    colors = rng.random((n, 3))
    tris = np.array([[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    a = rasterize(verts, colors, tris, cam)
    b = rasterize(verts, colors, tris[::-1], cam)
    np.testing.assert_array_equal(a.color, b.color)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_translation_shifts_lit_pixels():
    cam = Camera(focal=32.0, cx=16.0, cy=16.0, width=32, height=32)
    z = 2.0
    tri_uv = [(4.0, 10.0), (14.0, 10.0), (9.0, 20.0)]
    verts = screen_triangle(tri_uv, z, cam)
    dx_world = 0.25
    shift = cam.focal * dx_world / z  # expected pixel shift
    a = rasterize(verts, np.ones((3, 3)), [[0, 1, 2]], cam)
    b = rasterize(verts + [dx_world, 0, 0], np.ones((3, 3)), [[0, 1, 2]], cam)
    ax = np.nonzero(a.face_mask)[1].mean()
    bx = np.nonzero(b.face_mask)[1].mean()
    assert abs((bx - ax) - shift) < 1.0


def test_color_count_mismatch():
    cam = Camera(focal=10.0, cx=4.0, cy=4.0, width=8, height=8)
    with pytest.raises(ValueError):
        rasterize(np.zeros((3, 3)), np.zeros((2, 3)), [[0, 1, 2]], cam)
