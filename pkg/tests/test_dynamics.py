import math

import numpy as np
from parameterized import parameterized
from scipy.stats import chi2

from intersim.core.dynamics import (
    CavState,
    ControlSequence,
    EllipseAxes,
    MotionModel,
    check_psd,
    chi2_quantile_2dof,
    clip_correlation,
    collision_probability_bound,
    covariance_sequence,
    default_process_noise,
    ellipse_semi_axes,
    embed_axis_block,
    gaussian_interval_probability,
    propagate_covariance,
    propagate_mean,
    sample_gaussian,
    uncertainty_profile,
)
from intersim.core.exceptions import DomainError, InputLengthError, ValidationError
from intersim.core.sim import SIGMA0_STATED

from .common import DT, SIGMA0_BLOCK, IntersimTests, noisy_model


def at_rest():
    return CavState.from_vector(np.zeros(4))


class TestMotionModel(IntersimTests):
    def test_matrices(self):
        m = MotionModel.double_integrator(0.5)
        assert m.phi[0, 2] == m.phi[1, 3] == 0.5
        assert m.gamma[0, 0] == m.gamma[1, 1] == 0.125
        assert m.gamma[2, 0] == m.gamma[3, 1] == 0.5
        self.assertEqual(m.gamma[0, 1], 0)

        # zero velocity and zero control leave the position in place
        x = np.array([3.0, -7.0, 0.0, 0.0])
        self.assertArrayAlmostEqual(m.step(x, [0, 0]), x, atol=0)

    def test_bad_models(self):
        self.assertRaises(ValidationError, MotionModel.double_integrator, 0)
        self.assertRaises(ValidationError, MotionModel.double_integrator, 0.5, -np.eye(4))
        self.assertRaises(ValidationError, embed_axis_block, np.eye(2), 2)
        self.assertRaises(ValidationError, embed_axis_block, np.eye(3), 0)

    def test_embedding(self):
        full = embed_axis_block([[1, 2], [2, 5]], 1)
        self.assertEqual(full[1, 1], 1)
        self.assertEqual(full[1, 3], 2)
        self.assertEqual(full[3, 3], 5)
        self.assertEqual(full[0].tolist(), [0, 0, 0, 0])

    def test_process_noise_default(self):
        q = default_process_noise(DT)
        self.assertAlmostEqual(q[0, 0], 0.0125 * DT**4)
        self.assertAlmostEqual(q[0, 1], 0.025 * DT**3)
        self.assertAlmostEqual(q[1, 1], 0.5 * DT**2)
        check_psd(q)

    def test_sample_gaussian_inactive_axis(self):
        rng = np.random.default_rng(3)
        q = embed_axis_block(default_process_noise(DT), 0)
        for _ in range(50):
            w = sample_gaussian(q, rng)
            assert w[1] == 0 and w[3] == 0, w
        self.assertEqual(sample_gaussian(np.zeros((4, 4)), rng).tolist(), [0, 0, 0, 0])


class TestMean(IntersimTests):
    def test_zero_input(self):
        m = noisy_model()
        u = ControlSequence(np.zeros((5, 2)))
        for t in range(1, 6):
            self.assertArrayAlmostEqual(propagate_mean(at_rest(), u, m, t), np.zeros(4), atol=0)

    def test_constant_speed(self):
        x0 = CavState.from_vector([0, 0, 10, 0])
        mean = propagate_mean(x0, ControlSequence(np.zeros((2, 2))), noisy_model(), 2)
        self.assertArrayAlmostEqual(mean, [10, 0, 10, 0])

    def test_constant_acceleration(self):
        # half a * t^2 after 2 seconds
        u = ControlSequence.along_axis([2.0] * 4, axis=0)
        mean = propagate_mean(at_rest(), u, noisy_model(), 4)
        self.assertArrayAlmostEqual(mean, [4.0, 0, 4.0, 0])

        mean = propagate_mean(at_rest(), u, noisy_model(), 1)
        self.assertArrayAlmostEqual(mean, [0.25, 0, 1.0, 0])

    def test_errors(self):
        u = ControlSequence(np.zeros((3, 2)))
        self.assertRaises(DomainError, propagate_mean, at_rest(), u, noisy_model(), 0)
        self.assertRaises(InputLengthError, propagate_mean, at_rest(), u, noisy_model(), 4)

    def test_recursion_matches_closed_form(self):
        rng = np.random.default_rng(0)
        m = noisy_model()
        x0 = CavState.from_vector([-300, 2, 10, 0])
        u = ControlSequence.along_axis(rng.uniform(-3, 3, 112), axis=0)
        x = x0.vector
        for t in range(1, 113):
            x = m.step(x, u.accelerations[t - 1])
            if t in (1, 2, 10, 57, 112):
                np.testing.assert_allclose(propagate_mean(x0, u, m, t), x, rtol=1e-9, atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        m = noisy_model()
        x0 = CavState.from_vector([-40, 0, 7, 0])
        u = rng.uniform(-3, 3, (20, 2))
        v = rng.uniform(-3, 3, (20, 2))
        lhs = propagate_mean(x0, ControlSequence(u + v), m, 20) - propagate_mean(x0, ControlSequence(u), m, 20)
        self.assertArrayAlmostEqual(lhs, propagate_mean(at_rest(), ControlSequence(v), m, 20), atol=1e-9)

    def test_control_bounds(self):
        ControlSequence.along_axis([-3, 0, 3], 0).check_bounds(-3, 3)
        self.assertRaises(ValidationError, ControlSequence.along_axis([3.5], 0).check_bounds, -3, 3)


class TestCovariance(IntersimTests):
    def setUp(self):
        super().setUp()
        self.sigma0 = embed_axis_block(SIGMA0_BLOCK, 0)

    def test_empty_sum(self):
        self.assertArrayAlmostEqual(propagate_covariance(self.sigma0, noisy_model(), 0), self.sigma0, atol=0)

    def test_zero_process_noise(self):
        m = MotionModel.double_integrator(DT)
        for t in (1, 5, 50):
            self.assertArrayAlmostEqual(propagate_covariance(self.sigma0, m, t), self.sigma0, atol=0)

    def test_first_slot(self):
        xi = propagate_covariance(self.sigma0, noisy_model(), 1)
        self.assertAlmostEqual(xi[0, 0], 0.6 + 0.0125 * 0.5**4, places=12)
        self.assertArrayAlmostEqual(xi, self.sigma0 + embed_axis_block(default_process_noise(DT), 0), atol=1e-15)

    def test_stated_sigma0_is_rejected(self):
        # the stated cross term exceeds sqrt(0.6 * 0.06)
        bad = embed_axis_block(SIGMA0_STATED, 0)
        self.assertRaises(ValidationError, propagate_covariance, bad, noisy_model(), 1)
        self.assertRaises(ValidationError, ellipse_semi_axes, SIGMA0_STATED, 0.1)

    def test_clip_correlation(self):
        clipped = clip_correlation(SIGMA0_STATED)
        self.assertAlmostEqual(clipped[0, 1], math.sqrt(0.6 * 0.06))
        self.assertEqual(clipped[0, 1], clipped[1, 0])
        self.assertEqual(clipped[0, 0], 0.6)
        check_psd(clipped)

        ok = np.array([[1.0, -0.5], [-0.5, 1.0]])
        self.assertArrayAlmostEqual(clip_correlation(ok), ok, atol=0)
        self.assertLess(clip_correlation([[1.0, -3.0], [-3.0, 1.0]])[0, 1], 0)

    def test_monotone_and_psd(self):
        seq = covariance_sequence(self.sigma0, noisy_model(), 112)
        self.assertEqual(len(seq), 113)
        for prev, cur in zip(seq, seq[1:]):
            check_psd(cur)
            check_psd(cur - prev, 'increment')

    def test_sequence_matches_direct(self):
        m = noisy_model()
        seq = covariance_sequence(self.sigma0, m, 30)
        for t in (0, 1, 7, 30):
            self.assertArrayAlmostEqual(seq[t], propagate_covariance(self.sigma0, m, t), atol=1e-12)

    @parameterized.expand([(1,), (10,), (112,)])
    def test_monte_carlo(self, t):
        # the summed term is the spread that process noise alone adds over t slots
        rng = np.random.default_rng(t)
        m = noisy_model()
        n = 100000
        idx = [0, 2]
        q = m.process_noise[np.ix_(idx, idx)]
        phi = m.phi[np.ix_(idx, idx)]
        x = np.zeros((n, 2))
        for _ in range(t):
            x = x @ phi.T + rng.multivariate_normal(np.zeros(2), q, size=n)
        expected = (propagate_covariance(self.sigma0, m, t) - self.sigma0)[np.ix_(idx, idx)]
        sampled = np.cov(x.T)
        np.testing.assert_allclose(sampled, expected, rtol=0.05)


class TestEllipse(IntersimTests):
    def test_chi2(self):
        self.assertAlmostEqual(chi2_quantile_2dof(math.exp(-0.5)), 1.0, places=12)
        self.assertAlmostEqual(chi2_quantile_2dof(1e-5), 23.0259, places=4)
        self.assertAlmostEqual(chi2_quantile_2dof(0.5), 1.3863, places=4)
        for eps in (1e-5, 0.01, 0.05, 0.3):
            self.assertAlmostEqual(chi2_quantile_2dof(eps), chi2.ppf(1 - eps, 2), places=6)
        for eps in (0, 1, -0.1, 2):
            self.assertRaises(DomainError, chi2_quantile_2dof, eps)

    def test_axes(self):
        self.assertEqual(ellipse_semi_axes(np.zeros((2, 2)), 1e-5), EllipseAxes(0.0, 0.0))

        axes = ellipse_semi_axes(np.diag([0.6, 0.6]), 1e-5)
        self.assertAlmostEqual(axes.major, 3.717, places=3)
        self.assertAlmostEqual(axes.minor, 3.717, places=3)

        axes = ellipse_semi_axes(np.diag([1.0, 4.0]), math.exp(-0.5))
        self.assertAlmostEqual(axes.major, 2.0)
        self.assertAlmostEqual(axes.minor, 1.0)

        self.assertRaises(ValidationError, EllipseAxes, 1.0, 2.0)
        self.assertRaises(ValidationError, ellipse_semi_axes, np.diag([1.0, -1.0]), 0.1)

    def test_containment(self):
        eps = 0.05
        cov = np.array([[2.0, 0.7], [0.7, 0.5]])
        axes = ellipse_semi_axes(cov, eps)
        _, vecs = np.linalg.eigh(cov)
        n = 100000
        samples = np.random.default_rng(7).multivariate_normal(np.zeros(2), cov, size=n)
        minor_c, major_c = (samples @ vecs).T
        inside = (major_c / axes.major) ** 2 + (minor_c / axes.minor) ** 2 <= 1
        rate = inside.mean()
        self.assertGreaterEqual(rate, 1 - eps - 3 * math.sqrt(eps * (1 - eps) / n))

    def test_profile(self):
        m = noisy_model()
        profile = uncertainty_profile(embed_axis_block(SIGMA0_BLOCK, 0), m, 1e-5, 20)
        self.assertEqual(len(profile), 21)
        self.assertAlmostEqual(profile.axis(0), math.sqrt(23.0258509 * 0.6), places=5)
        assert np.all(np.diff(profile.axes) >= 0)
        # indexes past the end stay at the last value
        self.assertEqual(profile.axis(500), profile.axes[-1])
        self.assertEqual(profile.variance(0), 0.6)


class TestProbabilities(IntersimTests):
    def test_collision_bound(self):
        self.assertEqual(collision_probability_bound(0), 0)
        self.assertEqual(collision_probability_bound(1), 1)
        self.assertAlmostEqual(collision_probability_bound(1e-5), 1.99999e-5, places=15)
        self.assertLessEqual(collision_probability_bound(0.3), 0.6)
        self.assertRaises(DomainError, collision_probability_bound, 1.5)

    def test_interval(self):
        self.assertEqual(gaussian_interval_probability(3.0, 0.0, (0, 5)), 1.0)
        self.assertEqual(gaussian_interval_probability(7.0, 0.0, (0, 5)), 0.0)
        self.assertAlmostEqual(gaussian_interval_probability(0.0, 1.0, (-math.inf, 0)), 0.5)
        self.assertAlmostEqual(gaussian_interval_probability(0.0, 1.0, (-1.96, 1.96)), 0.95, places=3)
        self.assertAlmostEqual(gaussian_interval_probability(10.0, 4.0, (8, 12)), 0.6826894921, places=8)
        self.assertRaises(DomainError, gaussian_interval_probability, 0.0, 1.0, (1, -1))
        self.assertRaises(DomainError, gaussian_interval_probability, 0.0, -1.0, (-1, 1))
