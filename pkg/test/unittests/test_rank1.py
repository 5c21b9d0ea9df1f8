from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from rve_stability.errors import ClassificationMisuseError
from rve_stability.materials import nh_eval
from rve_stability.rank1 import (acoustic_tensor, classify_discontinuity, rank1_indicator,
                                 tangent_tensor)
from .mocks import NH, isotropic_tangent


class TestAcousticTensor(TestCase):
    def test_index_map(self):
        A = np.arange(16.0).reshape(4, 4)
        T = tangent_tensor(A)
        self.assertEqual(T[1, 0, 0, 1], A[1, 2])
        self.assertEqual(T[0, 1, 1, 1], A[2, 3])

    def test_isotropic(self):
        A = isotropic_tangent(2.0, 1.5)
        Q = acoustic_tensor(A, np.array([0.6, 0.8]))
        M = np.array([0.6, 0.8])
        assert_allclose(Q, 3.5 * np.outer(M, M) + 1.5 * np.eye(2), atol=1e-14)


class TestRank1Indicator(TestCase):
    def test_isotropic_minimum_is_shear_modulus(self):
        report = rank1_indicator(isotropic_tangent(2.0, 1.5))
        self.assertAlmostEqual(report.B, 1.5)
        assert_allclose(report.B_alpha, 1.5)
        self.assertTrue(report.elliptic)
        self.assertFalse(report.critical)
        self.assertEqual(len(report.alphas), 720)

    def test_reference_neo_hookean(self):
        report = rank1_indicator(nh_eval(np.eye(2), NH).A)
        self.assertAlmostEqual(report.B, NH.mu, places=8)

    def test_loss_of_ellipticity(self):
        report = rank1_indicator(isotropic_tangent(2.0, 0.0))
        self.assertTrue(report.critical)
        self.assertAlmostEqual(abs(report.m @ report.M), 0.0)
        self.assertEqual(report.discontinuity(), "shear")

    def test_compat_scan_is_upper_bound(self):
        A = nh_eval(np.array([1.3, 0.1, 0.05, 0.8]), NH).A
        exact = rank1_indicator(A)
        compat = rank1_indicator(A, compat=True)
        self.assertGreaterEqual(compat.B, exact.B - 1e-12)
        self.assertAlmostEqual(compat.B, exact.B, delta=1e-3 * exact.scale)

    def test_unit_vectors(self):
        report = rank1_indicator(nh_eval(np.array([1.1, 0.0, 0.2, 0.9]), NH).A,
                                 angle_step=np.pi / 90)
        self.assertAlmostEqual(np.linalg.norm(report.m), 1.0)
        self.assertAlmostEqual(np.linalg.norm(report.M), 1.0)
        self.assertEqual(len(report.alphas), 90)
        self.assertTrue(0.0 <= report.alpha < np.pi)


class TestClassifyDiscontinuity(TestCase):
    def test_kinds(self):
        self.assertEqual(classify_discontinuity([0.0, 1.0], [1.0, 0.0]), "shear")
        self.assertEqual(classify_discontinuity([1.0, 0.0], [-1.0, 0.0]), "splitting")
        self.assertEqual(classify_discontinuity([1.0, 1.0], [1.0, 0.0]), "mixed")

    def test_misuse(self):
        with self.assertRaises(ClassificationMisuseError):
            classify_discontinuity([0.0, 1.0], [1.0, 0.0], B=0.5)
        self.assertEqual(classify_discontinuity([0.0, 1.0], [1.0, 0.0], B=1e-9), "shear")

    def test_negative_B_classifies(self):
        self.assertEqual(classify_discontinuity([0.0, 1.0], [1.0, 0.0], B=-0.5), "shear")
        self.assertEqual(classify_discontinuity([1.0, 0.0], [1.0, 0.0], B=-2.0, scale=10.0),
                         "splitting")
