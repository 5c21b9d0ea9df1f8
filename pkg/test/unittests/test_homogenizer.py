from dataclasses import replace
from unittest import TestCase, mock

import numpy as np
from numpy.testing import assert_allclose

from rve_stability.errors import NewtonDivergence, SingularSystemError, SolverError
from rve_stability.homogenizer import (LinearBoundary, RveProblem, homogenize,
                                       homogenize_path, linear_displacement_solve,
                                       solve_rve)
from rve_stability.materials import NeoHookean, nh_eval, to_voigt
from rve_stability.mesh import tile_mesh
from .mocks import J2, NH, hole_cell, problem_for, square_grid

PATCH_MODULE = "rve_stability.homogenizer"

F_TEST = np.array([1.05, 0.02, 0.03, 0.96])


class TestHomogeneousCell(TestCase):
    def test_matches_material_point(self):
        for kind in ("Q4", "Q9"):
            problem = problem_for(square_grid(2, kind))
            _, state = homogenize(problem, F_TEST)
            resp = nh_eval(F_TEST, NH)
            assert_allclose(state.P, to_voigt(resp.P), rtol=1e-8, atol=1e-10)
            assert_allclose(state.A, resp.A, rtol=1e-7, atol=1e-8 * np.abs(resp.A).max())
            self.assertAlmostEqual(state.psi, resp.psi, places=9)

    def test_identity(self):
        problem = problem_for(square_grid(2))
        solution, state = homogenize(problem, [1.0, 0.0, 0.0, 1.0])
        assert_allclose(state.P, 0.0, atol=1e-12)
        assert_allclose(solution.u, 0.0, atol=1e-12)

    def test_negative_det(self):
        with self.assertRaises(SolverError):
            solve_rve(problem_for(square_grid(1)), [0.5, 0.0, 0.0, -0.5])

    def test_missing_material(self):
        with self.assertRaises(SolverError):
            RveProblem(mesh=square_grid(1), materials={2: NH})


class TestHoleCell(TestCase):
    @classmethod
    def setUpClass(cls):
        cls.problem = problem_for(hole_cell())
        cls.solution, cls.state = homogenize(cls.problem, F_TEST)

    def test_fixed_node_reaction_vanishes(self):
        scale = np.abs(self.solution.multipliers).max()
        assert_allclose(self.solution.lambda_fix, 0.0, atol=1e-8 * scale)

    def test_stress_measures_agree(self):
        assert_allclose(self.state.P, self.state.P_avg, atol=1e-8 * np.abs(self.state.P).max())

    def test_fd_tangent(self):
        h = 1e-6
        A_fd = np.empty((4, 4))
        for J in range(4):
            dF = np.zeros(4)
            dF[J] = h
            plus = homogenize(self.problem, F_TEST + dF, self.solution)[1].P
            minus = homogenize(self.problem, F_TEST - dF, self.solution)[1].P
            A_fd[:, J] = (plus - minus) / (2 * h)
        assert_allclose(self.state.A, A_fd, atol=1e-5 * np.abs(self.state.A).max())

    def test_tangent_symmetry(self):
        A = self.state.A
        assert_allclose(A, A.T, atol=1e-8 * np.abs(A).max())

    def test_fixed_node_invariance(self):
        mesh = self.problem.mesh
        other = int(mesh.pairing.boundary_nodes[0])
        moved = problem_for(mesh.with_fixed_node(other))
        _, state = homogenize(moved, F_TEST)
        assert_allclose(state.P, self.state.P, rtol=1e-8, atol=1e-12)
        self.assertAlmostEqual(state.psi, self.state.psi, places=10)

    def test_tiling_invariance(self):
        big = problem_for(tile_mesh(self.problem.mesh, 2, 1).paired())
        _, state = homogenize(big, F_TEST)
        assert_allclose(state.P, self.state.P, rtol=1e-7, atol=1e-10)
        assert_allclose(state.A, self.state.A, rtol=1e-6, atol=1e-8 * np.abs(state.A).max())
        self.assertAlmostEqual(state.psi, self.state.psi, places=9)

    def test_linear_boundary_is_stiffer(self):
        linear = linear_displacement_solve(self.problem, F_TEST)
        self.assertGreaterEqual(linear.psi, self.state.psi - 1e-12)
        self.assertIsInstance(self.problem.with_boundary(
            LinearBoundary(self.problem.mesh)).boundary, LinearBoundary)

    def test_path(self):
        solution, records = homogenize_path(self.problem, F_TEST, n_steps=3)
        self.assertEqual(len(records), 3)
        assert_allclose(records[-1].P, self.state.P, rtol=1e-8, atol=1e-12)
        assert_allclose(solution.F_bar, F_TEST)

    def test_converged_iterate_kept_at_singular_jacobian(self):
        problem = problem_for(square_grid(2))
        solution, _ = homogenize(problem, F_TEST)
        strict = replace(problem, settings=replace(problem.settings, singular_ratio=1.0))
        again = solve_rve(strict, F_TEST, solution)
        self.assertEqual(again.iterations, 0)
        self.assertLess(again.min_pivot, again.max_pivot)
        assert_allclose(again.u, solution.u)
        with self.assertRaises(SingularSystemError):
            solve_rve(strict, F_TEST)


class TestMixedLocking(TestCase):
    def test_mixed_element_avoids_locking(self):
        """A nearly incompressible matrix around holes: Q4 locks, Q9P3 does not."""
        rubber = NeoHookean(kappa=1e4, mu=1.0)
        F = np.array([1.0, 0.0, 0.0, 0.98])
        psi = {}
        for kind in ("Q4", "Q9"):
            problem = problem_for(hole_cell(kind), rubber, tol=1e-10)
            psi[kind] = homogenize_path(problem, F, n_steps=4)[1][-1].psi
        self.assertGreater(psi["Q9"], 0.0)
        self.assertGreater(psi["Q4"], 2.0 * psi["Q9"])


class TestPathRollback(TestCase):
    def test_rejected_step_restarts_from_committed_state(self):
        problem = problem_for(hole_cell(), J2, tol=1e-10)
        F_target = np.array([1.08, 0.0, 0.06, 0.95])
        calls = []

        def reject_second(prob, F, warm_start=None, states=None):
            alphas = (None if warm_start is None else
                      [[st.alpha for st in points] for points in warm_start.states])
            calls.append((np.array(F), warm_start, alphas))
            result = homogenize(prob, F, warm_start, states)
            if len(calls) == 2:
                raise NewtonDivergence("forced rejection", 3, 1.0)
            return result

        with mock.patch(f"{PATCH_MODULE}.homogenize", side_effect=reject_second):
            solution, records = homogenize_path(problem, F_target, n_steps=4)

        (_, first, _), (F_rejected, base, before), (F_retry, retry_base, after) = calls[:3]
        self.assertIsNone(first)
        self.assertIs(retry_base, base)
        self.assertEqual(after, before)
        self.assertLess(np.linalg.norm(F_retry - base.F_bar),
                        np.linalg.norm(F_rejected - base.F_bar))
        self.assertEqual(len(records), len(calls) - 1)
        assert_allclose(solution.F_bar, F_target)
        self.assertGreater(max(st.alpha for points in solution.states for st in points), 0.0)

        replay = None
        for i, (F, _, _) in enumerate(calls):
            if i == 1:
                continue
            replay, state = homogenize(problem, F, replay)
        assert_allclose(records[-1].P, state.P, rtol=1e-8, atol=1e-10)
