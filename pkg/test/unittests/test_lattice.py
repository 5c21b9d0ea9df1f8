from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from rve_stability.errors import LatticeError
from rve_stability.lattice import LatticeSpec, reciprocal_basis


class TestReciprocalBasis(TestCase):
    def test_square(self):
        b1, b2 = reciprocal_basis([1.0, 0.0], [0.0, 1.0])
        assert_allclose(b1, [2 * np.pi, 0.0])
        assert_allclose(b2, [0.0, 2 * np.pi])

    def test_duality_skewed(self):
        a1, a2 = np.array([1.0, 0.0]), np.array([0.5, 0.8])
        b1, b2 = reciprocal_basis(a1, a2)
        self.assertAlmostEqual(a1 @ b1, 2 * np.pi)
        self.assertAlmostEqual(a2 @ b2, 2 * np.pi)
        self.assertAlmostEqual(a1 @ b2, 0.0)
        self.assertAlmostEqual(a2 @ b1, 0.0)

    def test_degenerate(self):
        with self.assertRaises(LatticeError):
            reciprocal_basis([1.0, 0.0], [2.0, 0.0])
        with self.assertRaises(LatticeError):
            reciprocal_basis([0.0, 0.0], [0.0, 1.0])


class TestLatticeSpec(TestCase):
    def setUp(self):
        self.lattice = LatticeSpec([1.0, 0.0], [0.5, 0.8])

    def test_duality_residual(self):
        self.assertLess(self.lattice.duality_residual(), 1e-12)

    def test_area(self):
        self.assertAlmostEqual(self.lattice.area, 0.8)

    def test_translations(self):
        T = self.lattice.translations()
        self.assertEqual(T.shape, (8, 2))
        self.assertFalse(np.any(np.all(T == 0.0, axis=1)))

    def test_coefficients(self):
        L = 2 * self.lattice.a1 - self.lattice.a2
        self.assertEqual(self.lattice.coefficients(L), (2, -1))
        with self.assertRaises(LatticeError):
            self.lattice.coefficients([0.3, 0.1])

    def test_scaled(self):
        big = self.lattice.scaled(2, 3)
        assert_allclose(big.a1, [2.0, 0.0])
        assert_allclose(big.a2, [1.5, 2.4])
        self.assertAlmostEqual(big.area, 6 * self.lattice.area)

    def test_wavevector_phase(self):
        k = self.lattice.wavevector(0.5, 0.25)
        self.assertAlmostEqual(k @ self.lattice.a1, np.pi)
        self.assertAlmostEqual(k @ self.lattice.a2, 0.5 * np.pi)
