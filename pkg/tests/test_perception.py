"""Renderer, embedding, and reference-distribution tests.

Covariance and Mahalanobis results are checked against hand-computed values
and an independent double-loop / linear-solve implementation.
"""

import json

import numpy as np
import pytest

from viewsafe.camera import CameraModel
from viewsafe.geometry import InvalidInputError, Pose
from viewsafe.perception import (
    DefaultPerceptionModel,
    FAR_CLIP,
    InsufficientDataError,
    Primitive,
    Scene,
    embed_default,
    fit_reference,
    load_embeddings,
    mahalanobis_sq,
    recog_score,
    render_synthetic,
)


def loop_covariance(z):
    """O(n d^2) double-loop sample covariance, denominator n-1."""
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    mu = z.mean(axis=0)
    sigma = np.zeros((d, d))
    for row in z:
        diff = row - mu
        for i in range(d):
            for j in range(d):
                sigma[i, j] += diff[i] * diff[j]
    return mu, sigma / (n - 1)


def make_cam():
    return CameraModel(fx=32.0, fy=32.0, c_u=16.0, c_v=16.0, width=32, height=32,
                       sigma=8.0)


def sphere_scene(radius=0.03, center=(0.0, 0.0, 0.5)):
    return Scene(Primitive("sphere", np.array(center), np.array([radius])))


class TestReferenceDistribution:
    def test_hand_oracle_2d(self):
        # {(0,0),(2,0),(0,2),(2,2)}: mean (1,1); each coordinate has deviations
        # (-1,1,-1,1) and (-1,-1,1,1), so var = 4/3 and the cross term is 0
        z = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        ref = fit_reference(z, lambda_reg=1e-9)
        assert np.allclose(ref.mu, [1.0, 1.0], atol=1e-12)
        assert np.allclose(ref.sigma, (4.0 / 3.0) * np.eye(2), atol=1e-12)

    def test_matches_double_loop_covariance(self):
        rng = np.random.default_rng(21)
        z = rng.normal(size=(17, 5))
        mu, sigma = loop_covariance(z)
        ref = fit_reference(z, lambda_reg=1e-6)
        assert np.allclose(ref.mu, mu, atol=1e-10)
        assert np.allclose(ref.sigma, sigma, atol=1e-10)

    def test_identical_embeddings_degenerate_covariance(self):
        z = np.tile([0.3, -0.7, 1.1], (6, 1))
        lam = 0.25
        ref = fit_reference(z, lambda_reg=lam)
        assert np.allclose(ref.sigma, 0.0, atol=1e-15)
        assert np.allclose(ref.sigma_inv, np.eye(3) / lam, atol=1e-10)
        assert mahalanobis_sq(z[0], ref) == pytest.approx(0.0, abs=1e-12)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            fit_reference(np.zeros((1, 4)))

    def test_nonfinite_and_bad_lambda_rejected(self):
        with pytest.raises(InvalidInputError):
            fit_reference(np.array([[0.0, np.nan], [1.0, 2.0]]))
        with pytest.raises(InvalidInputError):
            fit_reference(np.zeros((3, 2)), lambda_reg=-1.0)

    def test_sigma_symmetric_and_inverse_identity(self):
        rng = np.random.default_rng(22)
        z = rng.normal(size=(40, 6))
        ref = fit_reference(z, lambda_reg=0.1)
        assert np.allclose(ref.sigma, ref.sigma.T, atol=1e-12)
        prod = ref.sigma_inv @ (ref.sigma + ref.lambda_reg * np.eye(ref.d))
        assert np.allclose(prod, np.eye(ref.d), atol=1e-8)


class TestMahalanobis:
    def test_matches_linear_solve(self):
        rng = np.random.default_rng(23)
        for d in (2, 3, 5):
            z = rng.normal(size=(30, d))
            lam = 0.05
            ref = fit_reference(z, lambda_reg=lam)
            for _ in range(20):
                x = rng.normal(size=d)
                diff = x - ref.mu
                expected = float(diff @ np.linalg.solve(
                    ref.sigma + lam * np.eye(d), diff))
                assert mahalanobis_sq(x, ref) == pytest.approx(expected, abs=1e-8)

    def test_recog_scaling(self):
        # D^2 = 1 must score exactly e^{-1/2}
        ref = fit_reference(np.array([[0.0], [2.0]]), lambda_reg=1e-12)
        # sigma = 2, D^2(x) = (x-1)^2 / 2; x = 1 + sqrt(2) gives D^2 = 1
        x = np.array([1.0 + np.sqrt(2.0)])
        assert mahalanobis_sq(x, ref) == pytest.approx(1.0, abs=1e-9)
        assert recog_score(x, ref) == pytest.approx(np.exp(-0.5), abs=1e-9)
        assert recog_score(ref.mu, ref) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self):
        ref = fit_reference(np.zeros((3, 2)) + np.eye(3, 2), lambda_reg=0.1)
        with pytest.raises(InvalidInputError):
            mahalanobis_sq(np.zeros(3), ref)


class TestRenderer:
    def test_empty_view_is_background(self):
        # camera at origin looking at +z, sphere far behind it
        scene = sphere_scene(center=(0.0, 0.0, -2.0))
        obs = render_synthetic(scene, make_cam(), Pose())
        assert np.all(np.isinf(obs.depth))
        assert np.all(obs.labels == 0)

    def test_center_pixel_depth_hits_sphere_front(self):
        r = 0.05
        scene = sphere_scene(radius=r, center=(0.0, 0.0, 0.5))
        obs = render_synthetic(scene, make_cam(), Pose())
        cy, cx = 16, 16
        assert obs.labels[cy, cx] == 1
        # half-pixel ray offset moves the hit slightly off the front point
        assert obs.depth[cy, cx] == pytest.approx(0.5 - r, abs=2e-3)

    def test_box_rendering_and_labels(self):
        scene = Scene(
            Primitive("sphere", np.array([0.0, 0.0, 0.5]), np.array([0.03])),
            [Primitive("box", np.array([0.2, 0.0, 0.5]), np.array([0.05, 0.05, 0.05]))],
        )
        obs = render_synthetic(scene, make_cam(), Pose())
        assert set(np.unique(obs.labels)) <= {0, 1, 2}
        assert np.any(obs.labels == 1)
        assert np.any(obs.labels == 2)

    def test_embedding_continuity_under_1mm_shift(self):
        scene = sphere_scene()
        cam = make_cam()
        model = DefaultPerceptionModel(scene, cam)
        z0 = model.embed_pose(Pose())
        z1 = model.embed_pose(Pose(np.array([0.001, 0.0, 0.0])))
        assert np.linalg.norm(z1 - z0) < 0.05

    def test_embedding_shape_and_range(self):
        scene = sphere_scene()
        obs = render_synthetic(scene, make_cam(), Pose())
        z = embed_default(obs)
        assert z.shape == (32,)
        assert np.all(np.isfinite(z))
        assert np.all(z >= 0.0) and np.all(z <= 1.0 + 1e-12)

    def test_background_embedding(self):
        obs = render_synthetic(sphere_scene(center=(0, 0, -2.0)), make_cam(), Pose())
        z = embed_default(obs)
        assert np.allclose(z[:16], 1.0)  # depth grid saturates at FAR_CLIP
        assert np.allclose(z[16:], 0.0)  # no labels, no goal pixels
        assert FAR_CLIP == 5.0

    def test_primitive_validation(self):
        with pytest.raises(InvalidInputError):
            Primitive("cylinder", np.zeros(3), np.array([0.1]))
        with pytest.raises(InvalidInputError):
            Primitive("sphere", np.zeros(3), np.array([-0.1]))


class TestLoadEmbeddings:
    def test_csv(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("1.0,2.0\n3.5,-4.0\n")
        assert np.allclose(load_embeddings(str(path)), [[1.0, 2.0], [3.5, -4.0]])

    def test_json(self, tmp_path):
        path = tmp_path / "z.json"
        path.write_text(json.dumps([[0.1, 0.2], [0.3, 0.4]]))
        assert np.allclose(load_embeddings(str(path)), [[0.1, 0.2], [0.3, 0.4]])
