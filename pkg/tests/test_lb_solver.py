import numpy as np
import pytest

from geonop import lb_solver, manifold, sphere
from geonop.sphere import ShBasis, ShCoeffs


@pytest.fixture(scope="module")
def sphere_system():
    return lb_solver.assemble(manifold.unit_sphere(8), ShBasis(8))


class TestAssembly:
    def test_sphere_stiffness_is_spectral(self, sphere_system):
        s = sphere_system
        degrees = s.basis.degrees()
        np.testing.assert_allclose(s.stiffness,
                                   np.diag(degrees * (degrees + 1.0)),
                                   atol=1e-10)

    def test_sphere_mass_is_identity(self, sphere_system):
        n = sphere_system.basis.n_funcs
        np.testing.assert_allclose(sphere_system.mass, np.eye(n), atol=1e-10)

    def test_area(self, sphere_system):
        np.testing.assert_allclose(sphere_system.area, 4 * np.pi, rtol=1e-12)

    def test_stiffness_symmetric_psd(self):
        m = manifold.reference_shapes(6)[1]
        s = lb_solver.assemble(m, ShBasis(6))
        np.testing.assert_allclose(s.stiffness, s.stiffness.T, atol=1e-10)
        evals = np.linalg.eigvalsh(s.stiffness)
        assert evals.min() > -1e-10


class TestSolve:
    def test_sphere_eigenfunctions(self, sphere_system):
        s = sphere_system
        basis = s.basis
        for l in range(1, 9):
            for m_ord in range(-l, l + 1):
                i = basis.flat_index(l, m_ord)
                f = np.zeros(basis.n_funcs)
                f[i] = l * (l + 1.0)
                u = lb_solver.solve(s, ShCoeffs(basis, f))
                expect = np.zeros(basis.n_funcs)
                expect[i] = 1.0
                err = np.linalg.norm(u.c - expect) / np.linalg.norm(expect)
                assert err < 1e-8

    def test_random_shape_residual(self):
        rng = np.random.default_rng(0)
        for trial in range(3):
            c = np.zeros(81)
            c[0] = np.sqrt(4 * np.pi)
            c[1:] = 0.05 * rng.standard_normal(80)
            m = manifold.RadialManifold(ShCoeffs(ShBasis(8), c), label="rand")
            s = lb_solver.assemble(m, ShBasis(8))
            _, f = lb_solver.make_rhs(s, center_seed=trial)
            u = lb_solver.solve(s, f)
            resid = s.stiffness @ u.c - s.mass @ f.c
            assert np.abs(resid).max() < 1e-9

    def test_solution_has_zero_manifold_mean(self, sphere_system):
        _, f = lb_solver.make_rhs(sphere_system, center_seed=1)
        u = lb_solver.solve(sphere_system, f)
        mean = float(sphere_system.mean_functional() @ u.c)
        assert abs(mean) < 1e-12

    def test_nonzero_mean_rhs_rejected(self, sphere_system):
        basis = sphere_system.basis
        f = np.zeros(basis.n_funcs)
        f[0] = 1.0  # pure constant mode: nonzero mean
        with pytest.raises(lb_solver.ContractViolation):
            lb_solver.solve(sphere_system, ShCoeffs(basis, f))

    def test_energy_identity(self, sphere_system):
        # u' S u = u' M f for the Galerkin solution
        _, f = lb_solver.make_rhs(sphere_system, center_seed=2)
        u = lb_solver.solve(sphere_system, f)
        lhs = u.c @ sphere_system.stiffness @ u.c
        rhs = u.c @ sphere_system.mass @ f.c
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


class TestRhs:
    def test_gaussian_peak_at_center(self, sphere_system):
        center = np.array([0.0, 0.0, 1.0])
        _, f = lb_solver.make_rhs(sphere_system, center=center)
        theta = np.linspace(0.1, np.pi - 0.1, 50)
        phi = np.zeros(50)
        vals = sphere.synthesize(f, theta, phi)
        assert vals.argmax() == 0  # largest nearest the center

    def test_rhs_zero_mean(self, sphere_system):
        _, f = lb_solver.make_rhs(sphere_system, center_seed=3)
        mean = float(sphere_system.mean_functional() @ f.c)
        assert abs(mean) < 1e-12

    def test_default_rule_level(self):
        assert lb_solver.default_rule_level(12) == 2 * 12 + 8
