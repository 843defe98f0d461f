import math

import numpy as np
import pytest

from betagas.equilibrium import (
    EquilibriumError,
    EquilibriumProblem,
    NonContractionError,
    WindowTooSmallError,
    discrete_energy,
    euler_lagrange_residual,
    log_kernel,
    self_consistent_solve,
    semicircle_density,
    semicircle_measure,
    solve_equilibrium,
)
from betagas.model import ExternalField, GridMeasure, InteractionPotential

TOL = 1e-9


def quadratic(t):
    return np.asarray(t) ** 2


@pytest.fixture(scope="module")
def semicircle_solution():
    return solve_equilibrium(EquilibriumProblem.from_field(quadratic, 2.0, -3.0, 3.0, 1024), TOL)


class TestLogKernel:
    def test_symmetric_with_exact_diagonal(self):
        K = log_kernel(64, 0.1)
        np.testing.assert_array_equal(K, K.T)
        np.testing.assert_allclose(np.diag(K), 1.0 - math.log(0.05))
        assert K[0, 3] == pytest.approx(-math.log(0.3))


class TestSolveEquilibrium:
    def test_semicircle_edges(self, semicircle_solution):
        sol = semicircle_solution
        lo, hi = sol.mu.support(1e-12)
        dx = sol.mu.dx
        assert abs(hi - math.sqrt(2)) <= dx and abs(lo + math.sqrt(2)) <= dx

    def test_semicircle_density(self, semicircle_solution):
        mu = semicircle_solution.mu
        exact = semicircle_measure(math.sqrt(2), mu.left, mu.right, mu.n_cells)
        assert mu.l1_distance(exact) <= 1e-2

    def test_beta_four_edges(self):
        sol = solve_equilibrium(EquilibriumProblem.from_field(quadratic, 4.0, -4.0, 4.0, 1024), TOL)
        lo, hi = sol.mu.support(1e-12)
        assert abs(hi - 2.0) <= sol.mu.dx and abs(lo + 2.0) <= sol.mu.dx

    def test_even_field_gives_even_measure(self, semicircle_solution):
        w = semicircle_solution.mu.weights
        assert np.max(np.abs(w - w[::-1])) <= 1e-9

    def test_certificate(self, semicircle_solution):
        sol = semicircle_solution
        assert sol.el_residual <= TOL
        res, lam = euler_lagrange_residual(sol.mu, sol.V, 2.0)
        assert res <= TOL
        assert lam == pytest.approx(sol.lagrange_constant)

    def test_wrong_measure_rejected(self, semicircle_solution):
        mu = semicircle_solution.mu
        uniform = GridMeasure.uniform(mu.left, mu.right, mu.n_cells)
        res, _ = euler_lagrange_residual(uniform, semicircle_solution.V, 2.0)
        assert res > 0.1

    def test_perturbation_detected(self, semicircle_solution):
        mu = semicircle_solution.mu
        w = mu.weights.copy()
        center = mu.n_cells // 2
        edge = int(np.flatnonzero(w > 0)[-1])
        w[center - 10:center + 10] -= 0.01 / 20
        w[edge] += 0.01
        res, _ = euler_lagrange_residual(GridMeasure(mu.left, mu.right, mu.n_cells, w), semicircle_solution.V, 2.0)
        assert res > 10 * TOL

    def test_constant_shift(self, semicircle_solution):
        sol = semicircle_solution
        res0, lam0 = euler_lagrange_residual(sol.mu, sol.V, 2.0)
        res1, lam1 = euler_lagrange_residual(sol.mu, sol.V + 3.25, 2.0)
        assert lam1 - lam0 == pytest.approx(3.25, abs=1e-12)
        assert res1 == pytest.approx(res0, abs=1e-12)

    def test_objective_non_increasing(self, semicircle_solution):
        hist = np.array(semicircle_solution.objective_history)
        assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))

    def test_simplex_feasibility(self, semicircle_solution):
        w = semicircle_solution.mu.weights
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_objective_reported(self, semicircle_solution):
        sol = semicircle_solution
        K = log_kernel(sol.mu.n_cells, sol.mu.dx)
        assert sol.objective == pytest.approx(discrete_energy(sol.mu.weights, sol.V, K, 2.0), rel=1e-12)

    def test_grid_refinement(self):
        sols = [solve_equilibrium(EquilibriumProblem.from_field(quadratic, 2.0, -3.0, 3.0, n), TOL)
                for n in (128, 256, 512)]
        fine = np.repeat(sols[0].mu.weights, 2) / 2, np.repeat(sols[1].mu.weights, 2) / 2
        d1 = np.abs(fine[0] - sols[1].mu.weights).sum()
        d2 = np.abs(fine[1] - sols[2].mu.weights).sum()
        assert d2 <= 2 * d1

    def test_window_enlarged(self):
        sol = solve_equilibrium(EquilibriumProblem.from_field(quadratic, 2.0, -1.0, 1.0, 256), TOL)
        lo, hi = sol.mu.support(1e-12)
        assert sol.mu.right > 1.0
        assert abs(hi - math.sqrt(2)) <= sol.mu.dx

    def test_window_too_small_without_callable(self):
        mids = -1.0 + (np.arange(128) + 0.5) * 2.0 / 128
        with pytest.raises(WindowTooSmallError):
            solve_equilibrium(EquilibriumProblem(mids**2, 2.0, -1.0, 1.0, 128), TOL)

    def test_unreachable_tolerance(self):
        with pytest.raises(EquilibriumError) as info:
            solve_equilibrium(EquilibriumProblem.from_field(quadratic, 2.0, -3, 3, 128), 1e-30,
                              pg_iterations=2, max_active_set=1)
        assert not info.value.residual < 1e-30

    def test_invalid_problem(self):
        with pytest.raises(ValueError):
            EquilibriumProblem(np.zeros(10), 2.0, -1, 1, 10)
        with pytest.raises(ValueError):
            EquilibriumProblem(np.zeros(64), -1.0, -1, 1, 64)


class TestSelfConsistent:
    Q = ExternalField.gaussian()

    def test_zero_interaction_is_plain_solve(self):
        sc = self_consistent_solve(self.Q, InteractionPotential.zero(), 2.0, (-3.0, 3.0, 512))
        plain = solve_equilibrium(EquilibriumProblem.from_field(self.Q, 2.0, -3.0, 3.0, 512), 1e-9)
        np.testing.assert_array_equal(sc.mu.weights, plain.mu.weights)
        assert sc.self_consistency_residual == 0.0

    def test_fixed_point(self):
        h = InteractionPotential.gaussian(0.1, 1.0)
        tol = 1e-6
        sol = self_consistent_solve(self.Q, h, 2.0, (-3.0, 3.0, 512), tol=tol)
        assert sol.self_consistency_residual <= tol
        hist = sol.contraction_history
        assert all(b < a for a, b in zip(hist[1:], hist[2:]))

    def test_joint_scaling(self):
        h = InteractionPotential.gaussian(0.1, 1.0)
        c = 2.0
        a = self_consistent_solve(self.Q, h, 2.0, (-3.0, 3.0, 256), tol=1e-8)
        b = self_consistent_solve(ExternalField.gaussian(1.0 / c), InteractionPotential.gaussian(0.1 / c, 1.0),
                                  2.0 / c, (-3.0, 3.0, 256), tol=1e-8)
        assert a.mu.l1_distance(b.mu) <= 1e-6

    def test_non_contraction(self):
        # strong narrow repulsion, far from admissible, undamped: iterates oscillate
        h = InteractionPotential.gaussian(5.0, 4.0)
        with pytest.raises(NonContractionError):
            self_consistent_solve(self.Q, h, 2.0, (-4.0, 4.0, 128), damping=1.0, max_iter=40)

    def test_bad_damping(self):
        with pytest.raises(ValueError):
            self_consistent_solve(self.Q, InteractionPotential.zero(), 2.0, damping=0.0)


def test_semicircle_density_normalized():
    t = np.linspace(-2, 2, 200001)
    assert np.trapezoid(semicircle_density(t, 2.0), t) == pytest.approx(1.0, abs=1e-6)
