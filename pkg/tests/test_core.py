import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from embedseg.core import (
    CameraIntrinsics,
    RgbdFrame,
    backproject,
    compact_labels,
    cosine_distance,
    normalize_embeddings,
    paint_embeddings,
    project,
    resize_bilinear,
    resize_nearest,
    spherical_mean,
)


class TestBackproject:
    def test_principal_point_ray(self):
        intr = CameraIntrinsics(123.0, 77.0, 2.0, 1.0)
        depth = np.zeros((4, 4), dtype=np.float32)
        depth[1, 2] = 1.0  # pixel (u=2, v=1) is the principal point
        cloud = backproject(depth, intr)
        np.testing.assert_allclose(cloud[1, 2], [0.0, 0.0, 1.0])

    def test_missing_depth_maps_to_origin(self):
        intr = CameraIntrinsics(100.0, 100.0, 8.0, 8.0)
        cloud = backproject(np.zeros((16, 16), dtype=np.float32), intr)
        assert np.all(cloud == 0.0)

    def test_pinhole_formula(self):
        # u = cx + fx, v = cy, z = 2, fx = fy = 100  ->  (2, 0, 2)
        intr = CameraIntrinsics(100.0, 100.0, 5.0, 3.0)
        depth = np.zeros((8, 120), dtype=np.float32)
        depth[3, 105] = 2.0
        cloud = backproject(depth, intr)
        np.testing.assert_allclose(cloud[3, 105], [2.0, 0.0, 2.0], atol=1e-6)

    def test_rejects_nonfinite_and_negative(self):
        intr = CameraIntrinsics(10.0, 10.0, 1.0, 1.0)
        bad = np.full((2, 2), np.nan, dtype=np.float32)
        with pytest.raises(ValueError):
            backproject(bad, intr)
        with pytest.raises(ValueError):
            backproject(np.full((2, 2), -1.0, dtype=np.float32), intr)

    @given(st.integers(0, 2**31 - 1))
    def test_project_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        intr = CameraIntrinsics(
            fx=float(rng.uniform(20, 200)),
            fy=float(rng.uniform(20, 200)),
            cx=float(rng.uniform(0, 15)),
            cy=float(rng.uniform(0, 15)),
        )
        depth = rng.uniform(0.1, 5.0, size=(16, 16)).astype(np.float32)
        cloud = backproject(depth, intr)
        uv = project(cloud, intr)
        uu, vv = np.meshgrid(np.arange(16), np.arange(16))
        np.testing.assert_allclose(uv[..., 0], uu, atol=1e-3)
        np.testing.assert_allclose(uv[..., 1], vv, atol=1e-3)


class TestNormalize:
    def test_scales_to_unit(self):
        out = normalize_embeddings(np.array([[[3.0, 4.0]]], dtype=np.float32))
        np.testing.assert_allclose(out[0, 0], [0.6, 0.8], atol=1e-6)

    def test_unit_vector_unchanged(self):
        v = np.array([[[0.0, 1.0, 0.0]]], dtype=np.float32)
        np.testing.assert_allclose(normalize_embeddings(v), v)

    def test_zero_vector_becomes_e1(self):
        out = normalize_embeddings(np.zeros((2, 2, 3), dtype=np.float32))
        np.testing.assert_array_equal(out[..., 0], 1.0)
        np.testing.assert_array_equal(out[..., 1:], 0.0)

    @given(st.integers(0, 2**31 - 1))
    def test_idempotent(self, seed):
        raw = np.random.default_rng(seed).standard_normal((5, 4, 6)).astype(np.float32)
        once = normalize_embeddings(raw)
        twice = normalize_embeddings(once)
        np.testing.assert_allclose(twice, once, atol=1e-6)
        norms = np.linalg.norm(once, axis=-1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)


class TestCosineDistance:
    def test_identity_antipode_orthogonal(self):
        x = np.array([1.0, 0.0, 0.0])
        y = np.array([0.0, 1.0, 0.0])
        assert cosine_distance(x, x) == 0.0
        assert cosine_distance(x, -x) == 1.0
        assert cosine_distance(x, y) == 0.5

    @given(st.integers(0, 2**31 - 1))
    def test_symmetric_bounded_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(5)
        a /= np.linalg.norm(a)
        b = rng.standard_normal(5)
        b /= np.linalg.norm(b)
        dab = cosine_distance(a, b)
        assert dab == cosine_distance(b, a)
        assert 0.0 <= dab <= 1.0
        assert cosine_distance(a, a) < 1e-12


class TestSphericalMean:
    def test_copies_of_one_vector(self):
        v = np.array([0.0, 0.6, 0.8])
        np.testing.assert_allclose(spherical_mean(np.tile(v, (7, 1))), v, atol=1e-12)

    def test_two_basis_vectors(self):
        vs = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(spherical_mean(vs), [2**-0.5, 2**-0.5])

    def test_antipodal_degenerate_branch(self):
        vs = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]])
        np.testing.assert_array_equal(spherical_mean(vs), [1.0, 0.0, 0.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spherical_mean(np.zeros((0, 3)))


class TestCompactLabels:
    def test_gaps_close(self):
        mask = np.array([[0, 5], [9, 5]])
        np.testing.assert_array_equal(compact_labels(mask), [[0, 1], [2, 1]])

    def test_already_compact_unchanged(self):
        mask = np.array([[0, 1], [2, 1]])
        np.testing.assert_array_equal(compact_labels(mask), mask)

    def test_all_background(self):
        mask = np.zeros((3, 3), dtype=np.int32)
        np.testing.assert_array_equal(compact_labels(mask), mask)

    def test_first_occurrence_order(self):
        mask = np.array([[7, 3], [3, 7]])
        np.testing.assert_array_equal(compact_labels(mask), [[1, 2], [2, 1]])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            compact_labels(np.array([[-1, 0]]))


class TestGridConventions:
    @given(st.integers(0, 2**31 - 1))
    def test_pixel_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        grid = np.zeros((h, w, 3), dtype=np.float32)
        r, c = int(rng.integers(h)), int(rng.integers(w))
        val = rng.standard_normal(3).astype(np.float32)
        grid[r, c] = val
        np.testing.assert_array_equal(grid[r, c], val)

    def test_frame_shape_validation(self):
        intr = CameraIntrinsics(10.0, 10.0, 1.0, 1.0)
        rgb = np.zeros((4, 4, 3), dtype=np.float32)
        depth = np.zeros((4, 5), dtype=np.float32)
        with pytest.raises(ValueError):
            RgbdFrame.from_depth(rgb, depth, intr)

    def test_frame_cloud_is_backprojection(self):
        intr = CameraIntrinsics(50.0, 60.0, 3.0, 3.0)
        rng = np.random.default_rng(0)
        rgb = rng.uniform(size=(6, 6, 3)).astype(np.float32)
        depth = rng.uniform(0.5, 2.0, size=(6, 6)).astype(np.float32)
        frame = RgbdFrame.from_depth(rgb, depth, intr)
        np.testing.assert_array_equal(frame.cloud, backproject(depth, intr))


class TestPaintEmbeddings:
    def test_paints_basis_vectors(self):
        labels = np.array([[0, 1], [2, 0]])
        grid = paint_embeddings(labels, 4)
        np.testing.assert_array_equal(grid[0, 0], [1, 0, 0, 0])
        np.testing.assert_array_equal(grid[0, 1], [0, 1, 0, 0])
        np.testing.assert_array_equal(grid[1, 0], [0, 0, 1, 0])

    def test_dim_too_small_rejected(self):
        with pytest.raises(ValueError):
            paint_embeddings(np.array([[5]]), 4)


class TestResize:
    def test_identity_same_size(self):
        img = np.random.default_rng(0).uniform(size=(5, 7, 3)).astype(np.float32)
        np.testing.assert_array_equal(resize_nearest(img, 5, 7), img)
        np.testing.assert_allclose(resize_bilinear(img, 5, 7), img, atol=1e-6)

    def test_nearest_2x_blocks(self):
        img = np.arange(4).reshape(2, 2)
        out = resize_nearest(img, 4, 4)
        np.testing.assert_array_equal(out, np.repeat(np.repeat(img, 2, 0), 2, 1))

    def test_bilinear_preserves_constants(self):
        img = np.full((4, 6), 3.5, dtype=np.float32)
        np.testing.assert_allclose(resize_bilinear(img, 9, 5), 3.5, atol=1e-6)
