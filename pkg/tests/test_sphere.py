import numpy as np
import pytest

from geonop import sphere
from geonop.sphere import PoleError, ShBasis, ShCoeffs


def interior_angles(n, seed=0):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.2, np.pi - 0.2, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return theta, phi


class TestBasisIndexing:
    def test_flat_index(self):
        b = ShBasis(4)
        assert b.flat_index(0, 0) == 0
        assert b.flat_index(1, -1) == 1
        assert b.flat_index(1, 0) == 2
        assert b.flat_index(2, 2) == 8
        assert b.n_funcs == 25

    def test_degrees_vector(self):
        b = ShBasis(2)
        np.testing.assert_array_equal(b.degrees(), [0, 1, 1, 1, 2, 2, 2, 2, 2])


class TestQuadrature:
    def test_weights_sum_to_sphere_area(self):
        for level in (4, 9, 16):
            rule = sphere.build_quadrature(level)
            assert abs(rule.weights.sum() - 4 * np.pi) < 1e-12

    def test_node_counts(self):
        rule = sphere.build_quadrature(7)
        assert rule.n_nodes == 8 * 16

    def test_orthonormality(self):
        basis = ShBasis(6)
        rule = sphere.build_quadrature(2 * 6 + 2)
        y = sphere.eval_sh(basis, rule.theta, rule.phi)
        gram = y.T @ (rule.weights[:, None] * y)
        np.testing.assert_allclose(gram, np.eye(basis.n_funcs), atol=1e-12)


class TestEval:
    def test_low_degree_closed_forms(self):
        theta, phi = interior_angles(40)
        y = sphere.eval_sh(ShBasis(1), theta, phi)
        c = 1.0 / np.sqrt(4 * np.pi)
        np.testing.assert_allclose(y[:, 0], c, rtol=1e-13)
        np.testing.assert_allclose(y[:, 2], np.sqrt(3.0) * c * np.cos(theta),
                                   rtol=1e-12)
        np.testing.assert_allclose(
            y[:, 1], np.sqrt(3.0) * c * np.sin(theta) * np.sin(phi),
            rtol=1e-12)
        np.testing.assert_allclose(
            y[:, 3], np.sqrt(3.0) * c * np.sin(theta) * np.cos(phi),
            rtol=1e-12)

    @pytest.mark.parametrize("deriv,axis,order", [
        ("dtheta", 0, 1), ("dphi", 1, 1), ("dtheta2", 0, 2),
        ("dphi2", 1, 2)])
    def test_derivatives_match_finite_differences(self, deriv, axis, order):
        basis = ShBasis(5)
        theta, phi = interior_angles(25, seed=3)
        h = 1e-5 if order == 1 else 1e-4
        d = np.zeros(2)
        d[axis] = h
        yp = sphere.eval_sh(basis, theta + d[0], phi + d[1])
        ym = sphere.eval_sh(basis, theta - d[0], phi - d[1])
        if order == 1:
            ref = (yp - ym) / (2 * h)
        else:
            ref = (yp - 2 * sphere.eval_sh(basis, theta, phi) + ym) / h**2
        got = sphere.eval_sh(basis, theta, phi, deriv)
        np.testing.assert_allclose(got, ref, rtol=1e-5, atol=1e-6)

    def test_mixed_derivative_matches_cross_differences(self):
        basis = ShBasis(5)
        theta, phi = interior_angles(25, seed=4)
        h = 1e-4
        ref = (sphere.eval_sh(basis, theta + h, phi + h)
               - sphere.eval_sh(basis, theta + h, phi - h)
               - sphere.eval_sh(basis, theta - h, phi + h)
               + sphere.eval_sh(basis, theta - h, phi - h)) / (4 * h**2)
        got = sphere.eval_sh(basis, theta, phi, "dthetadphi")
        np.testing.assert_allclose(got, ref, rtol=1e-5, atol=1e-6)

    def test_pole_rejected_for_derivatives(self):
        basis = ShBasis(3)
        with pytest.raises(PoleError):
            sphere.eval_sh(basis, np.array([0.0]), np.array([0.0]), "dtheta")

    def test_pole_value_allowed(self):
        y = sphere.eval_sh(ShBasis(3), np.array([0.0]), np.array([0.0]))
        assert np.isfinite(y).all()


class TestTransforms:
    def test_analyze_synthesize_roundtrip(self):
        basis = ShBasis(8)
        rng = np.random.default_rng(7)
        c = ShCoeffs(basis, rng.standard_normal(basis.n_funcs))
        rule = sphere.build_quadrature(2 * 8 + 2)
        values = sphere.synthesize(c, rule.theta, rule.phi)
        c2 = sphere.analyze(values, rule, basis)
        np.testing.assert_allclose(c2.c, c.c, atol=1e-12)

    def test_constant_function_coefficient(self):
        basis = ShBasis(4)
        rule = sphere.build_quadrature(10)
        c = sphere.analyze(np.ones(rule.n_nodes), rule, basis)
        np.testing.assert_allclose(c.c[0], np.sqrt(4 * np.pi), rtol=1e-13)
        np.testing.assert_allclose(c.c[1:], 0.0, atol=1e-13)


class TestFibonacci:
    def test_angles_in_range_and_count(self):
        theta, phi = sphere.fibonacci_sphere(194)
        assert theta.shape == phi.shape == (194,)
        assert theta.min() > 0 and theta.max() < np.pi
        assert phi.min() >= 0 and phi.max() < 2 * np.pi

    def test_near_uniform_coverage(self):
        theta, phi = sphere.fibonacci_sphere(194)
        pts = np.stack([np.sin(theta) * np.cos(phi),
                        np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
        # mean position of a well-spread set is near the origin
        assert np.linalg.norm(pts.mean(axis=0)) < 0.02
