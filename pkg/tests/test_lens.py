"""Tests for the astigmatic forward model, synthesis and focal lines."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlff import (
    AstigmaticLensModel,
    DataError,
    DegenerateGeometryError,
    ObservationSet,
    Point3D,
    Ray4D,
    DiscreteSample,
    fit_linear_system,
    focal_lines,
    h_from_model,
    project_lambertian,
    synth_observations,
)

from .oracles import ray_line_distance, ray_points


def model_strategy(min_rel_gap=1e-3):
    """Hypothesis strategy for orthogonal-axes models with separated depths."""
    base = st.tuples(
        st.floats(-0.05, 0.05),
        st.floats(-0.05, 0.05),
        st.floats(0.2, 2.0),
        st.floats(0.2, 2.0),
        st.floats(0.0, math.pi - 1e-9),
    )

    def build(args):
        px, py, za, zb, theta = args
        pz1, pz2 = sorted((za, zb))
        return AstigmaticLensModel(
            px=px, py=py, pz1=pz1, pz2=pz2,
            theta1=theta, theta2=theta + math.pi / 2,
        )

    return base.filter(
        lambda a: abs(a[3] - a[2]) >= min_rel_gap * min(a[2], a[3])
    ).map(build)


# =========================================================================
# Model construction
# =========================================================================

class TestAstigmaticLensModel:

    def test_angles_normalized_to_half_turn(self):
        m = AstigmaticLensModel(0, 0, 0.5, 0.5, math.pi + 0.3, -0.2)
        assert m.theta1 == pytest.approx(0.3, abs=1e-15)
        assert m.theta2 == pytest.approx(math.pi - 0.2, abs=1e-15)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(DataError):
            AstigmaticLensModel(0, 0, 0.0, 1.0, 0.0, 1.0)
        with pytest.raises(DataError):
            AstigmaticLensModel(0, 0, 0.5, -1.0, 0.0, 1.0)

    def test_parallel_axes_with_distinct_depths_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            AstigmaticLensModel(0, 0, 0.5, 1.0, 0.3, 0.3 + math.pi)

    def test_parallel_axes_allowed_when_spherical(self):
        m = AstigmaticLensModel(0, 0, 0.5, 0.5, 0.3, 0.3)
        assert m.is_spherical

    def test_axes_are_unit_vectors(self, rotated_model):
        assert np.linalg.norm(rotated_model.v1) == pytest.approx(1.0, rel=1e-15)
        assert np.linalg.norm(rotated_model.v2) == pytest.approx(1.0, rel=1e-15)

    def test_from_axes_matches_angles(self):
        m = AstigmaticLensModel.from_axes(0.0, 0.0, 0.4, 0.9, [1, 1], [-1, 1])
        assert m.theta1 == pytest.approx(math.pi / 4, rel=1e-12)
        assert m.theta2 == pytest.approx(3 * math.pi / 4, rel=1e-12)

    def test_dict_round_trip(self, toric_model):
        back = AstigmaticLensModel.from_dict(toric_model.to_dict())
        assert back == toric_model

    def test_dict_keys(self, toric_model):
        assert set(toric_model.to_dict()) == {
            "Px", "Py", "Pz1", "Pz2", "theta1", "theta2"
        }

    def test_from_dict_rejects_unknown_keys(self, toric_model):
        data = toric_model.to_dict()
        data["Pz3"] = 1.0
        with pytest.raises(DataError):
            AstigmaticLensModel.from_dict(data)

    def test_from_dict_tolerates_id(self, toric_model):
        data = toric_model.to_dict()
        data["id"] = 7
        assert AstigmaticLensModel.from_dict(data) == toric_model


# =========================================================================
# Slope matrix
# =========================================================================

class TestHFromModel:

    def test_spherical_model_gives_isotropic_slope(self):
        """Equal depths collapse H to (-D/Pz) I for any axis orientation."""
        for theta in (0.0, 0.4, 1.1):
            m = AstigmaticLensModel(0, 0, 0.5, 0.5, theta, theta + math.pi / 2)
            h = h_from_model(m, 0.1)
            assert np.allclose(h, -0.2 * np.eye(2), rtol=0, atol=1e-16)

    def test_axis_aligned_toric(self, toric_model):
        """V = I: H is the plain diagonal of the two slopes."""
        h = h_from_model(toric_model, 0.1)
        assert np.allclose(h, np.diag([-0.2, -0.1]), rtol=0, atol=1e-16)

    def test_rotated_axes_eigenvector_relation(self):
        """H V1 = s1 V1 for a 30-degree rotated basis, by direct multiply."""
        theta = math.radians(30.0)
        m = AstigmaticLensModel(0, 0, 0.5, 1.0, theta, theta + math.pi / 2)
        h = h_from_model(m, 0.1)
        assert np.allclose(h @ m.v1, -0.2 * m.v1, rtol=0, atol=1e-15)
        assert np.allclose(h @ m.v2, -0.1 * m.v2, rtol=0, atol=1e-15)

    @given(m=model_strategy())
    def test_symmetric_for_orthogonal_axes(self, m):
        h = h_from_model(m, 0.1)
        assert np.linalg.norm(h - h.T) < 1e-12

    @given(m=model_strategy())
    def test_eigenvalues_are_the_two_slopes(self, m):
        h = h_from_model(m, 0.1)
        got = np.sort(np.linalg.eigvals(h).real)
        want = np.sort([-0.1 / m.pz1, -0.1 / m.pz2])
        assert np.allclose(got, want, rtol=1e-12, atol=1e-15)

    @given(m=model_strategy())
    def test_swapping_the_two_axes_is_invisible(self, m):
        swapped = AstigmaticLensModel(
            px=m.px, py=m.py, pz1=m.pz2, pz2=m.pz1,
            theta1=m.theta2, theta2=m.theta1,
        )
        assert np.allclose(
            h_from_model(m, 0.1), h_from_model(swapped, 0.1), rtol=0, atol=1e-15
        )

    def test_nonorthogonal_axes_supported_forward(self):
        m = AstigmaticLensModel(0, 0, 0.5, 1.0, 0.0, math.radians(60))
        h = h_from_model(m, 0.1)
        # oblique basis: H exists but is not symmetric
        assert np.linalg.norm(h - h.T) > 1e-3


# =========================================================================
# Observation synthesis
# =========================================================================

class TestSynthObservations:

    def test_covers_every_view_once(self, std_intr, toric_model):
        obs = synth_observations(toric_model, std_intr)
        assert len(obs) == 169
        assert len(np.unique(obs.views, axis=0)) == 169

    def test_lambertian_case_reproduces_direct_projection(self, std_intr):
        """Spherical model and the point projector agree at noise zero."""
        m = AstigmaticLensModel(0.01, -0.02, 0.75, 0.75, 0.0, math.pi / 2)
        obs = synth_observations(m, std_intr)
        p = Point3D(m.px, m.py, 0.75)
        u, v = project_lambertian(p, obs.rays[:, 0], obs.rays[:, 1], std_intr.d)
        assert np.allclose(obs.rays[:, 2], u, rtol=0, atol=1e-18)
        assert np.allclose(obs.rays[:, 3], v, rtol=0, atol=1e-18)

    def test_noiseless_fit_residual_vanishes(self, std_intr, rotated_model):
        obs = synth_observations(rotated_model, std_intr)
        _, rms = fit_linear_system(obs)
        assert rms < 1e-12

    def test_fixed_seed_reproduces_set(self, std_intr, toric_model):
        a = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=9)
        b = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=9)
        assert np.array_equal(a.rays, b.rays)
        assert np.array_equal(a.pixels, b.pixels)

    def test_different_seeds_differ(self, std_intr, toric_model):
        a = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=1)
        b = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=2)
        assert not np.array_equal(a.rays, b.rays)

    def test_noise_perturbs_only_relative_coordinates(self, std_intr, toric_model):
        clean = synth_observations(toric_model, std_intr)
        noisy = synth_observations(toric_model, std_intr, noise_sigma=1e-5, seed=3)
        assert np.array_equal(clean.rays[:, :2], noisy.rays[:, :2])
        assert not np.array_equal(clean.rays[:, 2:], noisy.rays[:, 2:])

    def test_noise_magnitude_matches_sigma(self, std_intr, toric_model):
        sigma = 2e-5
        clean = synth_observations(toric_model, std_intr)
        noisy = synth_observations(toric_model, std_intr, noise_sigma=sigma, seed=17)
        delta = noisy.rays[:, 2:] - clean.rays[:, 2:]
        assert np.std(delta) == pytest.approx(sigma, rel=0.15)

    def test_pixels_consistent_with_rays(self, std_intr, toric_model):
        obs = synth_observations(toric_model, std_intr, noise_sigma=1e-5, seed=5)
        k, l = std_intr.pixel_for_view_ray(
            obs.views[:, 0], obs.views[:, 1], obs.rays[:, 2], obs.rays[:, 3]
        )
        assert np.allclose(obs.pixels[:, 0], k, rtol=0, atol=1e-9)
        assert np.allclose(obs.pixels[:, 1], l, rtol=0, atol=1e-9)

    def test_generator_seed_advances_state(self, std_intr, toric_model):
        rng = np.random.default_rng(0)
        a = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=rng)
        b = synth_observations(toric_model, std_intr, noise_sigma=1e-6, seed=rng)
        assert not np.array_equal(a.rays, b.rays)

    def test_negative_sigma_rejected(self, std_intr, toric_model):
        with pytest.raises(DataError):
            synth_observations(toric_model, std_intr, noise_sigma=-1.0)


class TestObservationSet:

    def test_duplicate_views_rejected(self):
        with pytest.raises(DataError):
            ObservationSet(
                feature_id=0,
                views=[[0, 0], [0, 0]],
                rays=np.zeros((2, 4)),
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            ObservationSet(feature_id=0, views=[[0, 0]], rays=np.zeros((2, 4)))

    def test_subset_keeps_alignment(self, std_intr, toric_model):
        obs = synth_observations(toric_model, std_intr)
        mask = np.zeros(len(obs), dtype=bool)
        mask[[0, 5, 100]] = True
        sub = obs.subset(mask)
        assert len(sub) == 3
        assert np.array_equal(sub.rays[1], obs.rays[5])
        assert np.array_equal(sub.pixels[2], obs.pixels[100])

    def test_from_items_round_trip(self):
        samples = [DiscreteSample(0, 0, 1.0, 2.0), DiscreteSample(0, 1, 3.0, 4.0)]
        rays = [Ray4D(0, 0, 1e-4, 2e-4), Ray4D(0, 1e-3, 3e-4, 4e-4)]
        obs = ObservationSet.from_items(7, samples, rays)
        assert obs.feature_id == 7
        assert obs.sample(1) == samples[1]
        assert obs.ray(0) == rays[0]


# =========================================================================
# Focal lines
# =========================================================================

class TestFocalLines:

    def test_spherical_interval_has_zero_length(self, lambertian_model):
        fl = focal_lines(lambertian_model)
        assert fl.interval_length == 0.0
        assert fl.c1 == fl.c2

    def test_toric_interval_length(self, toric_model):
        assert focal_lines(toric_model).interval_length == 0.5

    def test_lines_anchor_at_the_interval_endpoints(self, rotated_model):
        fl = focal_lines(rotated_model)
        assert fl.c1 == Point3D(rotated_model.px, rotated_model.py, rotated_model.pz1)
        assert fl.c2 == Point3D(rotated_model.px, rotated_model.py, rotated_model.pz2)
        assert np.allclose(fl.line1.point, fl.c1.as_array())
        assert np.allclose(fl.line2.point, fl.c2.as_array())

    def test_lines_lie_in_constant_depth_planes(self, rotated_model):
        fl = focal_lines(rotated_model)
        assert fl.line1.direction[2] == 0.0
        assert fl.line2.direction[2] == 0.0

    def test_every_noiseless_ray_meets_both_lines(self, std_intr):
        """Synthesized pencils pass within 1e-9 m of both focal lines."""
        rng = np.random.default_rng(21)
        for _ in range(5):
            theta = rng.uniform(0, math.pi)
            pz = np.sort(rng.uniform(0.2, 2.0, 2))
            m = AstigmaticLensModel(
                px=rng.uniform(-0.05, 0.05), py=rng.uniform(-0.05, 0.05),
                pz1=pz[0], pz2=pz[1] + 0.05,
                theta1=theta, theta2=theta + math.pi / 2,
            )
            obs = synth_observations(m, std_intr)
            fl = focal_lines(m)
            a, b = ray_points(obs.rays[:, :2], obs.rays[:, 2:], std_intr.d)
            for start, end in zip(a, b):
                direction = end - start
                for line in (fl.line1, fl.line2):
                    dist = ray_line_distance(
                        start, direction, line.point, line.direction
                    )
                    assert dist < 1e-9
