import numpy as np
import pytest

from stiga.assembly import SpaceTimeSpace, assemble_system
from stiga.errors import (
    DiscreteSolution,
    ErrorReport,
    convergence_rates,
    discrete_infsup_constant,
    error_norms,
    eval_solution,
    infsup_constant_from_matrices,
    l2_projection,
)
from stiga.geometry import UnitSquareMap, geometry_by_name
from stiga.linsolve import BlockSystem, solve
from stiga.problems import example1


def _solve_cell(problem, degree, level):
    geometry = geometry_by_name(problem.geometry_name)
    space = SpaceTimeSpace.uniform(geometry, level, degree, problem.final_time)
    sysm = assemble_system(space, problem.forcing)
    u, v, _ = solve(BlockSystem(sysm.W, sysm.K, sysm.M, sysm.load))
    return DiscreteSolution(u, v, space)


class TestEvalSolution:
    def test_zero_coefficients(self):
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 3, 2)
        sol = DiscreteSolution(np.zeros(space.N), np.zeros(space.N), space)
        value, grad, dt = eval_solution(sol, "u", (0.3, 0.4, 0.5))
        assert value == 0.0 and dt == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_reproduces_function_in_the_space(self):
        # u*(x,y,t) = t x(1-x) y(1-y) lies in the p=2 space with zero
        # boundary/initial traces, so its projection is exact
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 4, 2)
        u_star = lambda x, y, t: t * x * (1 - x) * y * (1 - y)
        coeffs = l2_projection(space, u_star)
        sol = DiscreteSolution(coeffs, np.zeros(space.N), space)
        rng = np.random.default_rng(3)
        for _ in range(20):
            z1, z2, tau = rng.uniform(0, 1, size=3)
            value, grad, dt = eval_solution(sol, "u", (z1, z2, tau))
            assert value == pytest.approx(u_star(z1, z2, tau), abs=1e-10)
            # gradient and time derivative of the chosen polynomial
            gx = tau * (1 - 2 * z1) * z2 * (1 - z2)
            gy = tau * z1 * (1 - z1) * (1 - 2 * z2)
            ft = z1 * (1 - z1) * z2 * (1 - z2)
            np.testing.assert_allclose(grad, [gx, gy], atol=1e-10)
            assert dt == pytest.approx(ft, abs=1e-10)

    def test_time_derivative_matches_finite_differences(self):
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 3, 2, final_time=2.0)
        rng = np.random.default_rng(59)
        sol = DiscreteSolution(rng.standard_normal(space.N), np.zeros(space.N), space)
        step = 1e-6
        for _ in range(10):
            z1, z2 = rng.uniform(0.1, 0.9, size=2)
            tau = rng.uniform(0.1, 0.9)
            _, _, dt = eval_solution(sol, "u", (z1, z2, tau))
            up, _, _ = eval_solution(sol, "u", (z1, z2, tau + step))
            um, _, _ = eval_solution(sol, "u", (z1, z2, tau - step))
            # FD in tau; physical derivative carries the 1/T chain factor
            fd = (up - um) / (2 * step) / space.final_time
            assert dt == pytest.approx(fd, abs=1e-5)

    def test_coefficient_validation(self):
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 3, 1)
        with pytest.raises(ValueError):
            DiscreteSolution(np.zeros(space.N + 1), np.zeros(space.N), space)
        bad = np.zeros(space.N)
        bad[0] = np.inf
        with pytest.raises(ValueError):
            DiscreteSolution(bad, np.zeros(space.N), space)


class TestErrorNorms:
    def test_exact_reproduction_gives_tiny_errors(self):
        # u* and v* both lie in the p=2 constrained space (v = -lap(u) does
        # not vanish on the boundary, so a scalar multiple of u* stands in)
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 4, 2)
        u_star = lambda x, y, t: t * x * (1 - x) * y * (1 - y)
        v_star = lambda x, y, t: 2.0 * u_star(x, y, t)

        class Exact:
            name = "inspace"
            geometry_name = "square"
            final_time = 1.0
            exact_u = staticmethod(u_star)
            exact_v = staticmethod(v_star)
            exact_dt_u = staticmethod(lambda x, y, t: x * (1 - x) * y * (1 - y) + 0 * t)
            exact_grad_u = staticmethod(
                lambda x, y, t: (t * (1 - 2 * x) * y * (1 - y), t * x * (1 - x) * (1 - 2 * y))
            )
            exact_grad_v = staticmethod(
                lambda x, y, t: (
                    2 * t * (1 - 2 * x) * y * (1 - y),
                    2 * t * x * (1 - x) * (1 - 2 * y),
                )
            )
            forcing = None

        sol = DiscreteSolution(
            l2_projection(space, u_star), l2_projection(space, v_star), space
        )
        report = error_norms(sol, Exact())
        for name in ("e_u1", "e_u2", "e_v1", "e_v2"):
            assert getattr(report, name) <= 1e-9

    def test_zero_solution_has_unit_relative_errors(self):
        prob = example1()
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 3, 1)
        sol = DiscreteSolution(np.zeros(space.N), np.zeros(space.N), space)
        report = error_norms(sol, prob)
        assert report.e_u1 == 1.0
        assert report.e_u2 == 1.0
        assert report.e_v1 == 1.0
        assert report.e_v2 == 1.0

    def test_geometry_mismatch_rejected(self):
        from stiga.problems import example2

        space = SpaceTimeSpace.uniform(UnitSquareMap(), 3, 1)
        sol = DiscreteSolution(np.zeros(space.N), np.zeros(space.N), space)
        with pytest.raises(ValueError, match="geometry"):
            error_norms(sol, example2())

    def test_report_metadata(self):
        prob = example1()
        sol = _solve_cell(prob, 2, 4)
        report = error_norms(sol, prob)
        assert report.h == pytest.approx(0.25)
        assert report.p == 2
        assert report.dof == 2 * sol.space.N

    def test_halving_ratio_in_expected_band(self):
        # consecutive refinement at p=2 must shrink E_u1 roughly 4x
        prob = example1()
        e_coarse = error_norms(_solve_cell(prob, 2, 8), prob).e_u1
        e_fine = error_norms(_solve_cell(prob, 2, 16), prob).e_u1
        assert 3.4 <= e_coarse / e_fine <= 4.6

    def test_quadrature_stability(self):
        # p+2 -> p+4 points changes each reported error by <= 0.1%
        prob = example1()
        sol = _solve_cell(prob, 2, 8)
        base = error_norms(sol, prob)
        refined = error_norms(sol, prob, quad_points=6)
        for name in ("e_u1", "e_u2", "e_v1", "e_v2"):
            a, b = getattr(base, name), getattr(refined, name)
            assert abs(a - b) / b <= 1e-3


class TestConvergenceRates:
    def _reports(self, hs, errors):
        return [
            ErrorReport(e_u1=e, e_u2=e, e_v1=e, e_v2=e, h=h, p=1, dof=8)
            for h, e in zip(hs, errors)
        ]

    def test_rate_two(self):
        rates = convergence_rates(self._reports([0.5, 0.25], [1e-2, 2.5e-3]))
        assert rates[0]["e_u1"] == pytest.approx(2.0)

    def test_stagnation_rate_zero(self):
        rates = convergence_rates(self._reports([0.5, 0.25], [3e-3, 3e-3]))
        assert rates[0]["e_u2"] == pytest.approx(0.0)

    def test_non_halving_pair_undefined(self):
        rates = convergence_rates(self._reports([0.5, 0.2], [1e-2, 1e-3]))
        assert all(v is None for v in rates[0].values())

    def test_zero_error_undefined(self):
        rates = convergence_rates(self._reports([0.5, 0.25], [1e-2, 0.0]))
        assert all(v is None for v in rates[0].values())

    def test_needs_two_reports(self):
        with pytest.raises(ValueError):
            convergence_rates(self._reports([0.5], [1e-2]))


class TestInfSupConstant:
    def test_positive_on_coarse_square_meshes(self):
        for level in (2, 4):
            space = SpaceTimeSpace.uniform(UnitSquareMap(), level, 1)
            constant = discrete_infsup_constant(space)
            assert constant > 0.01

    def test_scaling_invariance(self):
        rng = np.random.default_rng(61)
        n = 12
        A = rng.standard_normal((n, n))
        Q1 = rng.standard_normal((n, n))
        Q2 = rng.standard_normal((n, n))
        G1 = Q1 @ Q1.T + n * np.eye(n)
        G2 = Q2 @ Q2.T + n * np.eye(n)
        base = infsup_constant_from_matrices(A, G1, G2)
        alpha = 3.7
        scaled = infsup_constant_from_matrices(alpha * A, alpha * G1, alpha * G2)
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_guard_refuses_large_spaces(self):
        space = SpaceTimeSpace.uniform(UnitSquareMap(), 10, 2)  # N = 1100
        with pytest.raises(ValueError, match="exceeds"):
            discrete_infsup_constant(space)

    def test_rank_deficient_gram_rejected(self):
        A = np.eye(4)
        G_bad = np.zeros((4, 4))
        with pytest.raises(np.linalg.LinAlgError, match="rank-deficient"):
            infsup_constant_from_matrices(A, G_bad, np.eye(4))
