from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from rve_stability.errors import ElementInversionError, MaterialError
from rve_stability.materials import (J2Plasticity, MaterialPointState, NeoHookean,
                                     fd_tangent, from_voigt, j2_eval,
                                     material_from_config, nh_eval, to_voigt)
from rve_stability.stress_driver import rotation
from .mocks import J2, NH


class TestNeoHookean(TestCase):
    def test_reference_state(self):
        resp = nh_eval(np.eye(2), NH)
        assert_allclose(resp.P, 0.0, atol=1e-12)
        self.assertAlmostEqual(resp.psi, 0.0)

    def test_fd_tangent(self):
        F = np.array([1.2, 0.1, -0.05, 0.9])
        A = nh_eval(F, NH).A
        A_fd = fd_tangent(lambda G: nh_eval(G, NH).P, F)
        assert_allclose(A, A_fd, atol=1e-5 * np.abs(A).max())

    def test_major_symmetry(self):
        A = nh_eval(np.array([1.1, 0.2, 0.0, 0.8]), NH).A
        assert_allclose(A, A.T, atol=1e-10 * np.abs(A).max())

    def test_objectivity(self):
        F = np.array([[1.15, 0.05], [-0.1, 0.92]])
        Q = rotation(0.7)
        base = nh_eval(F, NH)
        turned = nh_eval(Q @ F, NH)
        assert_allclose(turned.P, Q @ base.P, atol=1e-10)
        self.assertAlmostEqual(turned.psi, base.psi)

    def test_voigt_order(self):
        T = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert_allclose(to_voigt(T), [1.0, 3.0, 2.0, 4.0])
        assert_allclose(from_voigt(to_voigt(T)), T)

    def test_inversion(self):
        with self.assertRaises(ElementInversionError):
            nh_eval(np.array([-1.0, 0.0, 0.0, 1.0]), NH)

    def test_parameters(self):
        with self.assertRaises(MaterialError):
            NeoHookean(kappa=1.0, mu=-1.0)


class TestJ2Plasticity(TestCase):
    def test_elastic_step_keeps_state(self):
        state = J2.initial_state()
        resp, new = j2_eval(np.array([1.001, 0.0, 0.0, 0.999]), state, J2)
        self.assertIs(new, state)
        self.assertLess(J2.yield_function(resp.tau, 0.0), 0.0)

    def test_yield_consistency(self):
        F = np.array([1.3, 0.1, 0.05, 0.85])
        resp, new = j2_eval(F, MaterialPointState(), J2)
        self.assertGreater(new.alpha, 0.0)
        self.assertAlmostEqual(J2.yield_function(resp.tau, new.alpha), 0.0, places=10)

    def test_unloading_freezes_hardening(self):
        F1 = np.array([1.3, 0.1, 0.05, 0.85])
        _, loaded = j2_eval(F1, MaterialPointState(), J2)
        F2 = F1 - 0.05 * (F1 - np.array([1.0, 0.0, 0.0, 1.0]))
        resp, unloaded = j2_eval(F2, loaded, J2)
        self.assertIs(unloaded, loaded)
        self.assertLess(J2.yield_function(resp.tau, loaded.alpha), 0.0)

    def test_plastic_fd_tangent(self):
        F = np.array([1.3, 0.1, 0.05, 0.85])
        state = MaterialPointState()
        A = j2_eval(F, state, J2)[0].A
        A_fd = fd_tangent(lambda G: j2_eval(G, state, J2)[0].P, F)
        assert_allclose(A, A_fd, atol=1e-5 * np.abs(A).max())

    def test_elastic_fd_tangent(self):
        F = np.array([1.001, 0.0005, 0.0, 0.999])
        state = MaterialPointState()
        A = j2_eval(F, state, J2)[0].A
        A_fd = fd_tangent(lambda G: j2_eval(G, state, J2)[0].P, F)
        assert_allclose(A, A_fd, atol=1e-5 * np.abs(A).max())

    def test_plastic_flow_is_isochoric(self):
        resp, new = j2_eval(np.array([1.3, 0.1, 0.05, 0.85]), MaterialPointState(), J2)
        self.assertAlmostEqual(np.linalg.det(new.Ci), 1.0, places=10)

    def test_parameters(self):
        with self.assertRaises(MaterialError):
            J2Plasticity(kappa=1.0, mu=1.0, sigma_y=0.0)


class TestMaterialFromConfig(TestCase):
    def test_build(self):
        mat = material_from_config({"kind": "j2_plasticity", "kappa": 17.5, "mu": 8,
                                    "sigma_y": 0.45, "K_p": 0.1})
        self.assertIsInstance(mat, J2Plasticity)
        self.assertTrue(mat.path_dependent)
        self.assertFalse(material_from_config({"kind": "neo_hookean", "kappa": 1,
                                               "mu": 1}).path_dependent)

    def test_unknown_kind(self):
        with self.assertRaises(MaterialError):
            material_from_config({"kind": "ogden", "mu": 1.0})

    def test_unknown_parameter(self):
        with self.assertRaises(MaterialError):
            material_from_config({"kind": "neo_hookean", "kappa": 1.0, "mu": 1.0,
                                  "lambda": 2.0})
