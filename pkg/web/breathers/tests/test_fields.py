import logging
import math

import numpy as np
from django.test import SimpleTestCase

from breathers.exceptions import ConfigurationError, UsageError
from breathers.fields import (
    FrequencyLattice,
    MultiplierSymbol,
    SpaceGrid,
    TimeFourierField,
    analyze_samples,
    apply_multiplier,
    collocation_samples,
    decay_rate,
    evaluate_field,
    inner_mass_fraction,
    integrate_samples,
    inner_product_l2,
    l2_norm,
    minimal_period,
    pointwise_cube,
    support,
)

logging.disable(logging.CRITICAL)

T = 2 * math.pi


class SpaceGridTestCase(SimpleTestCase):
    def setUp(self):
        self.grid = SpaceGrid(-1.875, 2.125, 161)

    def test_spacing(self):
        """Test node spacing and interior count"""
        self.assertAlmostEqual(self.grid.dx, 0.025)
        self.assertEqual(self.grid.n_interior, 159)

    def test_trapezoid_weights(self):
        """Test quadrature weights integrate constants exactly"""
        self.assertAlmostEqual(self.grid.integrate(np.ones(161)), 4.0, places=12)

    def test_node_index(self):
        """Test lookup of nodes and of points between nodes"""
        self.assertEqual(self.grid.node_index(0.0), 75)
        self.assertIsNone(self.grid.node_index(0.01))

    def test_invalid_grid(self):
        """Test rejection of reversed bounds"""
        with self.assertRaises(UsageError):
            SpaceGrid(1.0, 0.0, 10)

    def test_extended_keeps_spacing(self):
        """Test extension adds nodes with the same spacing"""
        wide = self.grid.extended(40, 40)
        self.assertAlmostEqual(wide.dx, self.grid.dx)
        self.assertAlmostEqual(wide.x_min, -2.875)


class FrequencyLatticeTestCase(SimpleTestCase):
    def test_odd_lattice(self):
        """Test odd lattice construction"""
        lattice = FrequencyLattice.odd(T, 5)
        self.assertEqual(lattice.modes, (1, 3, 5))
        self.assertAlmostEqual(lattice.omega, 1.0)

    def test_even_k_max_rejected(self):
        """Test even k_max raises"""
        with self.assertRaises(UsageError):
            FrequencyLattice.odd(T, 4)

    def test_restricted(self):
        """Test sublattice restriction keeps multiples of m"""
        restricted = FrequencyLattice.odd(T, 9).restricted(3)
        self.assertEqual(restricted.modes, (3, 9))
        self.assertEqual(restricted.sublattice_m, 3)

    def test_empty_restriction(self):
        """Test restriction without surviving frequencies raises"""
        with self.assertRaises(ConfigurationError):
            FrequencyLattice.odd(T, 1).restricted(3)

    def test_collocation(self):
        """Test collocation lattice spans the odd frequencies below M/2"""
        n = collocation_samples(3)
        self.assertEqual(n, 100)
        self.assertEqual(FrequencyLattice.odd(T, 3).collocation(n).modes, tuple(range(1, 50, 2)))
        self.assertEqual(collocation_samples(9, 3), 300)
        self.assertEqual(collocation_samples(3, oversampling=8), 28)

    def test_extended(self):
        """Test extension to three times k_max"""
        self.assertEqual(FrequencyLattice.odd(T, 3, 1).extended(3).modes, (1, 3, 5, 7, 9))


class TimeFourierFieldTestCase(SimpleTestCase):
    def setUp(self):
        self.grid = SpaceGrid(0.0, 1.0, 11)
        self.lattice = FrequencyLattice.odd(T, 3)

    def test_single_mode_synthesis(self):
        """Test a real coefficient synthesizes 2a cos(omega k t)"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {1: np.full(11, 0.5)})
        samples = evaluate_field(f, 8)
        self.assertTrue(np.allclose(samples[:, 0], 1.0))
        self.assertTrue(np.allclose(samples[:, 2], 0.0, atol=1e-14))

    def test_analysis_recovers_coefficients(self):
        """Test sampling then analysis returns the stored coefficients"""
        rng = np.random.default_rng(1)
        coeffs = rng.normal(size=(2, 11)) + 1j * rng.normal(size=(2, 11))
        f = TimeFourierField(self.grid, self.lattice, coeffs)
        back = analyze_samples(evaluate_field(f, 16), self.grid, self.lattice)
        self.assertTrue(np.allclose(back.coeffs, coeffs))

    def direct_samples(self, f, n_t):
        t = np.arange(n_t) * T / n_t
        phases = np.exp(1j * np.outer(f.lattice.modes, t))
        return 2.0 * (f.coeffs.T @ phases).real

    def test_synthesis_matches_direct_sum(self):
        """Test FFT synthesis against the explicit cosine sum"""
        rng = np.random.default_rng(2)
        f = TimeFourierField(self.grid, self.lattice, rng.normal(size=(2, 11)) + 1j * rng.normal(size=(2, 11)))
        self.assertTrue(np.allclose(evaluate_field(f, 16), self.direct_samples(f, 16)))

    def test_synthesis_folds_high_modes(self):
        """Test undersampled synthesis folds modes onto the zero, Nyquist and mirrored bins"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {3: np.full(11, 0.4 - 0.3j)})
        for n_t in (3, 4, 5, 6):
            self.assertTrue(np.allclose(evaluate_field(f, n_t), self.direct_samples(f, n_t)), n_t)

    def test_parseval(self):
        """Test the sampled space-time mean square equals the coefficient norm"""
        rng = np.random.default_rng(3)
        f = TimeFourierField(self.grid, self.lattice, rng.normal(size=(2, 11)) + 1j * rng.normal(size=(2, 11)))
        self.assertAlmostEqual(integrate_samples(self.grid, evaluate_field(f, 16) ** 2), l2_norm(f) ** 2, places=10)

    def test_analysis_needs_enough_samples(self):
        """Test analysis refuses to alias"""
        with self.assertRaises(UsageError):
            analyze_samples(np.zeros((11, 6)), self.grid, self.lattice)

    def test_cube_of_single_mode(self):
        """Test (2a cos t)^3 = 6a^3 cos t + 2a^3 cos 3t"""
        lattice = FrequencyLattice.odd(T, 1)
        f = TimeFourierField.from_modes(self.grid, lattice, {1: np.full(11, 0.5)})
        cube = pointwise_cube(f)
        self.assertEqual(cube.lattice.modes, (1, 3))
        self.assertTrue(np.allclose(cube.mode(1), 3 * 0.125))
        self.assertTrue(np.allclose(cube.mode(3), 0.125))

    def test_cube_restricted(self):
        """Test restricted cube drops frequencies above k_max"""
        lattice = FrequencyLattice.odd(T, 1)
        f = TimeFourierField.from_modes(self.grid, lattice, {1: np.full(11, 0.5)})
        self.assertEqual(pointwise_cube(f, restrict=True).lattice, lattice)

    def test_cube_refuses_small_buffer(self):
        """Test the cube refuses an aliasing buffer"""
        f = TimeFourierField.zeros(self.grid, self.lattice)
        with self.assertRaises(UsageError):
            pointwise_cube(f, k_buffer=5)

    def test_inner_product(self):
        """Test <f, f> = 2 sum_k int |f_k|^2"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {1: np.ones(11), 3: np.ones(11)})
        self.assertAlmostEqual(inner_product_l2(f, f), 4.0)
        self.assertAlmostEqual(l2_norm(f), 2.0)

    def test_incompatible_fields(self):
        """Test adding fields on different lattices raises"""
        f = TimeFourierField.zeros(self.grid, self.lattice)
        g = TimeFourierField.zeros(self.grid, FrequencyLattice.odd(T, 5))
        with self.assertRaises(UsageError):
            f + g

    def test_on_lattice_pads_and_restricts(self):
        """Test moving between lattices keeps shared frequencies"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {3: np.ones(11)})
        wide = f.on_lattice(self.lattice.extended(3))
        self.assertTrue(np.allclose(wide.mode(3), 1.0))
        self.assertTrue(np.allclose(wide.mode(9), 0.0))
        self.assertTrue(np.allclose(wide.on_lattice(self.lattice).coeffs, f.coeffs))

    def test_time_antiderivative_inverts_derivative(self):
        """Test d/dt after its inverse is the identity"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {1: np.ones(11), 3: np.arange(11.0)})
        symbol = MultiplierSymbol.derivative(self.lattice) * MultiplierSymbol.inverse_derivative(self.lattice)
        self.assertTrue(np.allclose(apply_multiplier(f, symbol).coeffs, f.coeffs))

    def test_multiplier_composition(self):
        """Test applying two symbols in turn equals applying their product"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {1: np.ones(11), 3: np.arange(11.0)})
        a = MultiplierSymbol.derivative(self.lattice)
        b = MultiplierSymbol.fractional(self.lattice, -0.5)
        twice = apply_multiplier(apply_multiplier(f, a), b)
        self.assertTrue(np.allclose(twice.coeffs, apply_multiplier(f, a * b).coeffs))

    def test_multiplier_missing_frequency(self):
        """Test a symbol without an entry for some frequency raises"""
        f = TimeFourierField.zeros(self.grid, self.lattice)
        with self.assertRaises(ConfigurationError):
            apply_multiplier(f, MultiplierSymbol({1: 1.0}))

    def test_minimal_period(self):
        """Test a field on k = 3 alone has period T/3"""
        f = TimeFourierField.from_modes(self.grid, self.lattice, {3: np.ones(11)})
        self.assertEqual(support(f), (3,))
        self.assertAlmostEqual(minimal_period(f), T / 3)

    def test_decay_rate(self):
        """Test the log-log decay exponent of mode norms"""
        lattice = FrequencyLattice.odd(T, 9)
        f = TimeFourierField.from_modes(self.grid, lattice, {k: np.full(11, k ** -2.0) for k in lattice.modes})
        self.assertAlmostEqual(decay_rate(f), 2.0, places=10)

    def test_inner_mass_fraction(self):
        """Test a narrow central profile keeps its mass in the inner half"""
        grid = SpaceGrid(-4.0, 4.0, 401)
        f = TimeFourierField.from_modes(grid, self.lattice, {1: np.exp(-grid.nodes ** 2 / 0.1)})
        self.assertGreater(inner_mass_fraction(f), 0.99)
